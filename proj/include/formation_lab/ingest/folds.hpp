#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/types.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <vector>

namespace formation_lab::ingest {

/// Outer folds from each protocol's outer group. Within outer loop g the
/// training protocols are relabelled 1..m in ascending id and protocol with
/// new label r goes to inner fold r mod 5.
inline FoldPlan assign_folds(const std::vector<CellManifestEntry>& entries) {
    std::map<int, int> group_of;
    for (const auto& e : entries) {
        if (e.outer_group < 1 || e.outer_group > FoldPlan::kOuterFolds)
            throw ValidationError("protocol " + std::to_string(e.protocol_id) +
                                  " has no valid outer group");
        const auto [it, fresh] = group_of.emplace(e.protocol_id, e.outer_group);
        if (!fresh && it->second != e.outer_group)
            throw ValidationError("protocol " + std::to_string(e.protocol_id) +
                                  " assigned to two outer groups");
    }
    FoldPlan plan;
    plan.outer_folds.assign(FoldPlan::kOuterFolds, {});
    for (const auto& [protocol, group] : group_of)
        plan.outer_folds[static_cast<std::size_t>(group - 1)].push_back(protocol);
    for (int g = 0; g < FoldPlan::kOuterFolds; ++g) {
        std::map<int, int> inner;
        int label = 0;
        for (const auto& [protocol, group] : group_of)
            if (group != g + 1) inner[protocol] = ++label % FoldPlan::kInnerFolds;
        plan.inner_fold_of.push_back(std::move(inner));
    }
    return plan;
}

/// Row indices of a train/test split.
struct Split {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
};

/// Rows of `m` in outer loop `g` (0-based): test = protocols of fold g.
inline Split outer_split(const CurveMatrix& m, const FoldPlan& plan, int g) {
    if (g < 0 || g >= plan.outer_loops()) throw ShapeError("outer loop index out of range");
    const auto& fold = plan.outer_folds[static_cast<std::size_t>(g)];
    const std::set<int> test(fold.begin(), fold.end());
    Split s;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        (test.count(m.protocol_ids[static_cast<std::size_t>(i)]) ? s.test : s.train).push_back(i);
    return s;
}

/// Rows of `m` in inner fold `k` of outer loop `g`. Rows whose protocol
/// belongs to the outer test set of g are never returned.
inline Split inner_split(const CurveMatrix& m, const FoldPlan& plan, int g, int k) {
    if (g < 0 || g >= plan.outer_loops()) throw ShapeError("outer loop index out of range");
    const auto& inner = plan.inner_fold_of[static_cast<std::size_t>(g)];
    Split s;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const auto it = inner.find(m.protocol_ids[static_cast<std::size_t>(i)]);
        if (it == inner.end()) continue;
        (it->second == k ? s.test : s.train).push_back(i);
    }
    return s;
}

} // namespace formation_lab::ingest
