#pragma once

#include "codec.hpp"
#include "fabric_sim.hpp"
#include "mapping_tables.hpp"
#include "perf_model.hpp"
#include "pool_manager.hpp"
#include "scenario.hpp"
#include "tlp.hpp"
