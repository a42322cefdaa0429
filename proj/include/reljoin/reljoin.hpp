#pragma once

#include "reljoin/bench.hpp"
#include "reljoin/config.hpp"
#include "reljoin/cost_model.hpp"
#include "reljoin/errors.hpp"
#include "reljoin/generator.hpp"
#include "reljoin/optimizer.hpp"
#include "reljoin/plan.hpp"
#include "reljoin/selector.hpp"
#include "reljoin/simulator.hpp"
#include "reljoin/stats.hpp"
#include "reljoin/strategies.hpp"
#include "reljoin/types.hpp"
#include "reljoin/units.hpp"
