#pragma once

// L-BFGS with a learnable step-size policy: two-loop recursion, the
// projection-and-clip log-step policy, TBPTT training over task families,
// and a benchmark harness with constant-step, line-search, ADAM and RMSprop
// baselines.

#include "lbfgspi/common.hpp"
#include "lbfgspi/config.hpp"
#include "lbfgspi/dataset.hpp"
#include "lbfgspi/engine.hpp"
#include "lbfgspi/fdcheck.hpp"
#include "lbfgspi/harness.hpp"
#include "lbfgspi/lbfgs.hpp"
#include "lbfgspi/policy.hpp"
#include "lbfgspi/rng.hpp"
#include "lbfgspi/steppers.hpp"
#include "lbfgspi/tape.hpp"
#include "lbfgspi/tasks.hpp"
#include "lbfgspi/trainer.hpp"
#include "lbfgspi/vec.hpp"
