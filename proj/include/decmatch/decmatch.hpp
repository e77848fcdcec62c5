#pragma once

#include "decmatch/baseline_learners.hpp"
#include "decmatch/equilibrium.hpp"
#include "decmatch/exp_learner.hpp"
#include "decmatch/generators.hpp"
#include "decmatch/io.hpp"
#include "decmatch/market.hpp"
#include "decmatch/matrix.hpp"
#include "decmatch/monotone.hpp"
#include "decmatch/rng.hpp"
#include "decmatch/simulation.hpp"
#include "decmatch/ucb.hpp"
