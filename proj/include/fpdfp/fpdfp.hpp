#pragma once

// Umbrella header: the whole library.

#include "fpdfp/config.hpp"
#include "fpdfp/dataio.hpp"
#include "fpdfp/experiment.hpp"
#include "fpdfp/fedsim.hpp"
#include "fpdfp/linops.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/prox.hpp"
#include "fpdfp/quantize.hpp"
#include "fpdfp/rng.hpp"
#include "fpdfp/solvers.hpp"
#include "fpdfp/vec.hpp"
