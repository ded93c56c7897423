#pragma once

#include "formation_lab/physics/derivatives.hpp"
#include "formation_lab/physics/ensemble.hpp"
#include "formation_lab/physics/kinetics.hpp"
#include "formation_lab/physics/ocv.hpp"
#include "formation_lab/physics/utilization.hpp"
