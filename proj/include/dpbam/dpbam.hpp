#pragma once

// Umbrella header. The accountant's MPFR reference path lives in
// accountant_reference.hpp and is not pulled in here, so ordinary consumers
// need no extra link dependencies.

#include "dpbam/accountant.hpp"
#include "dpbam/bias.hpp"
#include "dpbam/config.hpp"
#include "dpbam/datasets.hpp"
#include "dpbam/dp.hpp"
#include "dpbam/dual.hpp"
#include "dpbam/errors.hpp"
#include "dpbam/functions.hpp"
#include "dpbam/graph.hpp"
#include "dpbam/harness.hpp"
#include "dpbam/metrics.hpp"
#include "dpbam/models.hpp"
#include "dpbam/optimizers.hpp"
#include "dpbam/oracles.hpp"
#include "dpbam/param.hpp"
#include "dpbam/rng.hpp"
#include "dpbam/tensor.hpp"
