#pragma once

#include "mpg/core.hpp"
#include "mpg/game.hpp"
#include "mpg/mlp.hpp"
#include "mpg/policy.hpp"
#include "mpg/rollout.hpp"
#include "mpg/environments.hpp"
#include "mpg/numdiff.hpp"
#include "mpg/potential.hpp"
#include "mpg/solver.hpp"
#include "mpg/verifier.hpp"
#include "mpg/io.hpp"
