#pragma once

#include "crossdino/boost_loss.hpp"
#include "crossdino/cctm.hpp"
#include "crossdino/cctm_check.hpp"
#include "crossdino/clap.hpp"
#include "crossdino/error.hpp"
#include "crossdino/ops.hpp"
#include "crossdino/rng.hpp"
#include "crossdino/tensor.hpp"
#include "crossdino/harness/coco.hpp"
#include "crossdino/harness/fixed_size_mlp.hpp"
#include "crossdino/harness/score_stats.hpp"
#include "crossdino/harness/synth.hpp"
#include "crossdino/harness/train.hpp"
