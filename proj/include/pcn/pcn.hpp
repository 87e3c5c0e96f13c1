#pragma once

#include "pcn/artifacts.hpp"
#include "pcn/config.hpp"
#include "pcn/error.hpp"
#include "pcn/eval.hpp"
#include "pcn/forecast.hpp"
#include "pcn/loadfactor.hpp"
#include "pcn/protocol.hpp"
#include "pcn/rng.hpp"
#include "pcn/sim.hpp"
#include "pcn/trace.hpp"
