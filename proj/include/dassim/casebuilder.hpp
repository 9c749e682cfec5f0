#pragma once

#include "dassim/casebuilder/builder.hpp"
#include "dassim/casebuilder/executor.hpp"
#include "dassim/casebuilder/parameters.hpp"
