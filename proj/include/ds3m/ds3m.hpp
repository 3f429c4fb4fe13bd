#pragma once

#include "ds3m/autodiff.hpp"
#include "ds3m/baseline.hpp"
#include "ds3m/checkpoint.hpp"
#include "ds3m/config.hpp"
#include "ds3m/evaluation.hpp"
#include "ds3m/forecasting.hpp"
#include "ds3m/inference.hpp"
#include "ds3m/io.hpp"
#include "ds3m/model.hpp"
#include "ds3m/ops.hpp"
#include "ds3m/rng.hpp"
#include "ds3m/simulators.hpp"
#include "ds3m/tensor.hpp"
#include "ds3m/training.hpp"
