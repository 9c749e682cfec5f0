#pragma once

#include "dassim/testbeds/lorenz63.hpp"
#include "dassim/testbeds/metrics.hpp"
#include "dassim/testbeds/shallow_water.hpp"
#include "dassim/testbeds/twin.hpp"
