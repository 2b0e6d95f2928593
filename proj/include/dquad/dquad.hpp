#pragma once

// Everything except the CSV manifest writer (which needs nlohmann/json).

#include "dquad/bench.hpp"
#include "dquad/compensated_sum.hpp"
#include "dquad/driver.hpp"
#include "dquad/engine.hpp"
#include "dquad/errors.hpp"
#include "dquad/integrands.hpp"
#include "dquad/redistribution.hpp"
#include "dquad/region.hpp"
#include "dquad/rule_io.hpp"
#include "dquad/rules.hpp"
#include "dquad/transfer.hpp"
#include "dquad/version.hpp"
