#pragma once

#include "powtime/analytic.hpp"
#include "powtime/chain.hpp"
#include "powtime/config_json.hpp"
#include "powtime/metrics.hpp"
#include "powtime/rng.hpp"
#include "powtime/sim_config.hpp"
#include "powtime/simulator.hpp"
#include "powtime/trace_io.hpp"
#include "powtime/units.hpp"
