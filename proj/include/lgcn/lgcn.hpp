#pragma once

#include "lgcn/error.hpp"
#include "lgcn/matrix.hpp"
#include "lgcn/random.hpp"
#include "lgcn/tape.hpp"
#include "lgcn/graph.hpp"
#include "lgcn/model.hpp"
#include "lgcn/training.hpp"
#include "lgcn/metrics.hpp"
#include "lgcn/experiment.hpp"
#include "lgcn/io.hpp"
#include "lgcn/runtime.hpp"
