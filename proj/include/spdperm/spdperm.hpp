#pragma once

#include "spdperm/errors.hpp"
#include "spdperm/harness.hpp"
#include "spdperm/io.hpp"
#include "spdperm/means.hpp"
#include "spdperm/multivariate.hpp"
#include "spdperm/permutation.hpp"
#include "spdperm/rng.hpp"
#include "spdperm/similarity.hpp"
#include "spdperm/spd_tensor.hpp"
#include "spdperm/synth.hpp"
