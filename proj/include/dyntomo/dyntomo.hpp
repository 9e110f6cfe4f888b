#pragma once

/// @file dyntomo.hpp
/// Everything except config.hpp, which additionally needs nlohmann_json.

#include "dyntomo/core.hpp"
#include "dyntomo/em.hpp"
#include "dyntomo/filter.hpp"
#include "dyntomo/io.hpp"
#include "dyntomo/linops.hpp"
#include "dyntomo/memory.hpp"
#include "dyntomo/metrics.hpp"
#include "dyntomo/mmgks.hpp"
#include "dyntomo/motion.hpp"
#include "dyntomo/phantom.hpp"
#include "dyntomo/pipeline.hpp"
#include "dyntomo/prior.hpp"
#include "dyntomo/radon.hpp"
#include "dyntomo/smoother.hpp"
