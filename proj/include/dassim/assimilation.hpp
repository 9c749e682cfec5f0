#pragma once

#include "dassim/assimilation/enkf.hpp"
#include "dassim/assimilation/kalman.hpp"
#include "dassim/assimilation/observations.hpp"
#include "dassim/assimilation/variational.hpp"
