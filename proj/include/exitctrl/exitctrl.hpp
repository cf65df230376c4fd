#pragma once

#include "exitctrl/assumptions.hpp"
#include "exitctrl/bsde.hpp"
#include "exitctrl/domain.hpp"
#include "exitctrl/error.hpp"
#include "exitctrl/expr.hpp"
#include "exitctrl/hjb.hpp"
#include "exitctrl/parallel.hpp"
#include "exitctrl/paths.hpp"
#include "exitctrl/problem.hpp"
#include "exitctrl/regression.hpp"
#include "exitctrl/rng.hpp"
#include "exitctrl/run.hpp"
#include "exitctrl/stats.hpp"
#include "exitctrl/verify.hpp"
