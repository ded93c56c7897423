#pragma once

#include "formation_lab/diagnostics.hpp"
#include "formation_lab/errors.hpp"
#include "formation_lab/feature_design.hpp"
#include "formation_lab/fused_lasso.hpp"
#include "formation_lab/ingest.hpp"
#include "formation_lab/lambda_select.hpp"
#include "formation_lab/metrics.hpp"
#include "formation_lab/model_eval.hpp"
#include "formation_lab/parallel.hpp"
#include "formation_lab/physics.hpp"
#include "formation_lab/pipeline.hpp"
#include "formation_lab/svg.hpp"
#include "formation_lab/synthetic.hpp"
