#pragma once

#include "autodiff.hpp"
#include "checkpoint.hpp"
#include "cied.hpp"
#include "config.hpp"
#include "data.hpp"
#include "encoder.hpp"
#include "eval.hpp"
#include "factors.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "params.hpp"
#include "probes.hpp"
#include "rng.hpp"
#include "synthetic.hpp"
#include "tensor.hpp"
#include "train.hpp"
