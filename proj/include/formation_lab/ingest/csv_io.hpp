#pragma once

#include "formation_lab/errors.hpp"
#include "formation_lab/ingest/types.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace formation_lab::ingest {

inline constexpr std::string_view kManifestHeader =
    "cell_id,protocol_id,cc1_a,cc2_a,cv_v,n_ver,temp_c,t_ocv_s,cycle_life,outer_group";
inline constexpr std::string_view kSeriesHeader =
    "time_s,current_a,voltage_v,capacity_ah,energy_wh,temp_c,cycle_index,step_index";

namespace csv {

inline std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double to_double(std::string_view field, std::size_t line) {
    double v = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end || field.empty())
        throw ParseError("not a decimal number: '" + std::string(field) + "'", line);
    return v;
}

inline std::int64_t to_int(std::string_view field, std::size_t line) {
    std::int64_t v = 0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc{} || ptr != end || field.empty())
        throw ParseError("not an integer: '" + std::string(field) + "'", line);
    return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

/// Reads all lines, dropping a trailing CR on each.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

inline void expect_header(const std::vector<std::string>& lines, std::string_view header,
                          const std::filesystem::path& path) {
    if (lines.empty() || lines.front() != header)
        throw ParseError(path.string() + ": expected header '" + std::string(header) + "'", 1);
}

} // namespace csv

inline void validate(const CellManifestEntry& e, std::size_t line = 0) {
    const std::string where = line ? " (manifest line " + std::to_string(line) + ")" : "";
    if (e.cell_id.empty()) throw ValidationError("empty cell_id" + where);
    if (e.cycle_life <= 0) throw ValidationError(e.cell_id + ": cycle_life must be > 0" + where);
    if (e.outer_group < 1 || e.outer_group > FoldPlan::kOuterFolds)
        throw ValidationError(e.cell_id + ": outer_group must be in 1..5" + where);
    if (e.protocol_id < 1 || e.protocol_id > 62)
        throw ValidationError(e.cell_id + ": protocol_id must be in 1..62" + where);
}

/// Time strictly increasing; voltage inside the [2.5, 4.5] V sanity band.
inline void validate(const CellTimeSeries& s) {
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const auto& smp = s.samples[i];
        if (i > 0 && !(smp.time_s > s.samples[i - 1].time_s))
            throw ValidationError(s.cell_id + ": time not strictly increasing at sample " +
                                  std::to_string(i));
        if (!(smp.voltage_v >= 2.5 && smp.voltage_v <= 4.5))
            throw ValidationError(s.cell_id + ": voltage " + csv::format(smp.voltage_v) +
                                  " V outside [2.5, 4.5] at sample " + std::to_string(i));
    }
}

inline std::vector<CellManifestEntry> read_manifest(const std::filesystem::path& path) {
    const auto lines = csv::read_lines(path);
    csv::expect_header(lines, kManifestHeader, path);
    std::vector<CellManifestEntry> entries;
    std::set<std::string> seen;
    std::map<int, int> group_of_protocol;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t ln = i + 1;
        if (lines[i].empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != 10)
            throw ParseError("expected 10 fields, got " + std::to_string(f.size()), ln);
        CellManifestEntry e;
        e.cell_id = std::string(f[0]);
        e.protocol_id = static_cast<int>(csv::to_int(f[1], ln));
        e.cc1_a = csv::to_double(f[2], ln);
        e.cc2_a = csv::to_double(f[3], ln);
        e.cv_v = csv::to_double(f[4], ln);
        e.n_ver = static_cast<int>(csv::to_int(f[5], ln));
        e.temp_c = csv::to_double(f[6], ln);
        e.t_ocv_s = csv::to_double(f[7], ln);
        e.cycle_life = static_cast<int>(csv::to_int(f[8], ln));
        e.outer_group = static_cast<int>(csv::to_int(f[9], ln));
        validate(e, ln);
        if (!seen.insert(e.cell_id).second)
            throw ValidationError("duplicate cell_id " + e.cell_id + " (manifest line " +
                                  std::to_string(ln) + ")");
        const auto [it, fresh] = group_of_protocol.emplace(e.protocol_id, e.outer_group);
        if (!fresh && it->second != e.outer_group)
            throw ValidationError("protocol " + std::to_string(e.protocol_id) +
                                  " assigned to two outer groups (manifest line " +
                                  std::to_string(ln) + ")");
        entries.push_back(std::move(e));
    }
    return entries;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<CellManifestEntry>& entries) {
    std::ofstream out(path, std::ios::binary);
    out << kManifestHeader << '\n';
    for (const auto& e : entries)
        out << e.cell_id << ',' << e.protocol_id << ',' << csv::format(e.cc1_a) << ','
            << csv::format(e.cc2_a) << ',' << csv::format(e.cv_v) << ',' << e.n_ver << ','
            << csv::format(e.temp_c) << ',' << csv::format(e.t_ocv_s) << ',' << e.cycle_life
            << ',' << e.outer_group << '\n';
}

inline CellTimeSeries read_time_series(const std::filesystem::path& path, std::string cell_id) {
    const auto lines = csv::read_lines(path);
    csv::expect_header(lines, kSeriesHeader, path);
    CellTimeSeries s;
    s.cell_id = std::move(cell_id);
    s.samples.reserve(lines.size());
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::size_t ln = i + 1;
        if (lines[i].empty()) continue;
        const auto f = csv::split(lines[i]);
        if (f.size() != 8)
            throw ParseError(path.filename().string() + ": expected 8 fields, got " +
                                 std::to_string(f.size()),
                             ln);
        Sample smp;
        smp.time_s = csv::to_double(f[0], ln);
        smp.current_a = csv::to_double(f[1], ln);
        smp.voltage_v = csv::to_double(f[2], ln);
        smp.capacity_ah = csv::to_double(f[3], ln);
        smp.energy_wh = csv::to_double(f[4], ln);
        smp.temp_c = csv::to_double(f[5], ln);
        smp.cycle_index = csv::to_int(f[6], ln);
        smp.step_index = csv::to_int(f[7], ln);
        s.samples.push_back(smp);
    }
    return s;
}

inline void write_time_series(const std::filesystem::path& path, const CellTimeSeries& s) {
    std::ofstream out(path, std::ios::binary);
    out << kSeriesHeader << '\n';
    for (const auto& m : s.samples)
        out << csv::format(m.time_s) << ',' << csv::format(m.current_a) << ','
            << csv::format(m.voltage_v) << ',' << csv::format(m.capacity_ah) << ','
            << csv::format(m.energy_wh) << ',' << csv::format(m.temp_c) << ',' << m.cycle_index
            << ',' << m.step_index << '\n';
}

struct Dataset {
    std::vector<CellManifestEntry> entries;
    std::vector<CellTimeSeries> series;  ///< aligned with entries
};

/// Manifest plus one `<cell_id>.csv` per row from `data_dir`.
inline Dataset load_dataset(const std::filesystem::path& manifest_path,
                            const std::filesystem::path& data_dir) {
    Dataset ds;
    ds.entries = read_manifest(manifest_path);
    ds.series.reserve(ds.entries.size());
    for (const auto& e : ds.entries) {
        const auto file = data_dir / (e.cell_id + ".csv");
        if (!std::filesystem::exists(file))
            throw MissingCell("no time series for cell " + e.cell_id + " at " + file.string());
        auto s = read_time_series(file, e.cell_id);
        validate(s);
        ds.series.push_back(std::move(s));
    }
    return ds;
}

} // namespace formation_lab::ingest
