#pragma once

// Umbrella header: moment-closure toolkit for SDE models with polynomial and
// trigonometric dynamics.

#include "mclose/closure.hpp"
#include "mclose/csv.hpp"
#include "mclose/errors.hpp"
#include "mclose/expr.hpp"
#include "mclose/index.hpp"
#include "mclose/model.hpp"
#include "mclose/momentgen.hpp"
#include "mclose/parser.hpp"
#include "mclose/sim.hpp"
