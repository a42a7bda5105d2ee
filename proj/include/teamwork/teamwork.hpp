#pragma once

// Umbrella header for the teamwork coordinated low-rank adaptation library.

#include "teamwork/adapter.hpp"
#include "teamwork/attention.hpp"
#include "teamwork/checkpoint.hpp"
#include "teamwork/common.hpp"
#include "teamwork/config.hpp"
#include "teamwork/cost.hpp"
#include "teamwork/denoiser.hpp"
#include "teamwork/eval.hpp"
#include "teamwork/flops.hpp"
#include "teamwork/flow.hpp"
#include "teamwork/rng.hpp"
#include "teamwork/synth.hpp"
#include "teamwork/tensor.hpp"
#include "teamwork/tnsr_io.hpp"
#include "teamwork/train.hpp"
