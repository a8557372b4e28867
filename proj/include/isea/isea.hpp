#pragma once

#include "isea/types.hpp"
#include "isea/ecc.hpp"
#include "isea/policy.hpp"
#include "isea/config.hpp"
#include "isea/memory.hpp"
#include "isea/trace.hpp"
#include "isea/bus.hpp"
#include "isea/transmon.hpp"
#include "isea/system.hpp"
#include "isea/compiler.hpp"
#include "isea/supervisor.hpp"
#include "isea/scenario.hpp"
#include "isea/fuzz.hpp"
