#pragma once

#include "forsim/agents.hpp"
#include "forsim/collision.hpp"
#include "forsim/config.hpp"
#include "forsim/dynamics.hpp"
#include "forsim/error.hpp"
#include "forsim/geometry.hpp"
#include "forsim/io.hpp"
#include "forsim/metrics.hpp"
#include "forsim/optimization.hpp"
#include "forsim/policy.hpp"
#include "forsim/random.hpp"
#include "forsim/rollout.hpp"
#include "forsim/scenario.hpp"
#include "forsim/selection.hpp"
#include "forsim/simulation.hpp"
#include "forsim/state.hpp"
#include "forsim/world_state.hpp"
