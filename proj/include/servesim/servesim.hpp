#pragma once

#include "servesim/analyzer.hpp"
#include "servesim/batcher.hpp"
#include "servesim/costs.hpp"
#include "servesim/engine.hpp"
#include "servesim/gpu_memory.hpp"
#include "servesim/metrics.hpp"
#include "servesim/pipeline.hpp"
#include "servesim/report_io.hpp"
#include "servesim/rng.hpp"
#include "servesim/scenario.hpp"
#include "servesim/two_stage.hpp"
#include "servesim/types.hpp"
#include "servesim/validate.hpp"
