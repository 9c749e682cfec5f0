#pragma once

#include "dassim/numerics/adam.hpp"
#include "dassim/numerics/covariance.hpp"
#include "dassim/numerics/matrix.hpp"
#include "dassim/numerics/rng.hpp"
#include "dassim/numerics/tape.hpp"
