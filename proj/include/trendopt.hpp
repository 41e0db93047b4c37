#pragma once

// Library headers. The command layer (trendopt/cli.hpp) additionally needs
// libcrypto and is not included here.

#include "trendopt/config.hpp"
#include "trendopt/data.hpp"
#include "trendopt/error.hpp"
#include "trendopt/harness.hpp"
#include "trendopt/models.hpp"
#include "trendopt/optim.hpp"
#include "trendopt/smoothing.hpp"
#include "trendopt/verify.hpp"
#include "trendopt/verify_suite.hpp"
