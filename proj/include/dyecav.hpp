#pragma once

#include "dyecav/units.hpp"
#include "dyecav/hermite.hpp"
#include "dyecav/mode_basis.hpp"
#include "dyecav/dye_model.hpp"
#include "dyecav/thresholds.hpp"
#include "dyecav/system.hpp"
#include "dyecav/steady_state.hpp"
#include "dyecav/self_consistent.hpp"
#include "dyecav/integrator.hpp"
#include "dyecav/analysis.hpp"
#include "dyecav/sweep.hpp"
#include "dyecav/config.hpp"
#include "dyecav/manifest.hpp"
#include "dyecav/commands.hpp"
