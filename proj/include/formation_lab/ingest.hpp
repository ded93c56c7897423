#pragma once

#include "formation_lab/ingest/csv_io.hpp"
#include "formation_lab/ingest/folds.hpp"
#include "formation_lab/ingest/protocol_table.hpp"
#include "formation_lab/ingest/standardize.hpp"
#include "formation_lab/ingest/step_extraction.hpp"
#include "formation_lab/ingest/types.hpp"
