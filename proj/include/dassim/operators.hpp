#pragma once

#include "dassim/operators/autoencoder.hpp"
#include "dassim/operators/dense.hpp"
#include "dassim/operators/lstm.hpp"
#include "dassim/operators/model_io.hpp"
#include "dassim/operators/operator.hpp"
#include "dassim/operators/training.hpp"
