#pragma once

// Umbrella header for the whole pipeline.

#include "banet/boundary/boundary.hpp"
#include "banet/cli/commands.hpp"
#include "banet/config/run_config.hpp"
#include "banet/core/labels.hpp"
#include "banet/core/types.hpp"
#include "banet/core/volume.hpp"
#include "banet/core/volume_io.hpp"
#include "banet/infer/postprocess.hpp"
#include "banet/infer/sliding_window.hpp"
#include "banet/loss/loss.hpp"
#include "banet/metrics/metrics.hpp"
#include "banet/model/banet.hpp"
#include "banet/model/checkpoint.hpp"
#include "banet/model/config.hpp"
#include "banet/phantom/phantom.hpp"
#include "banet/preprocess/augment.hpp"
#include "banet/preprocess/patch.hpp"
#include "banet/preprocess/preprocess.hpp"
#include "banet/train/folds.hpp"
#include "banet/train/schedule.hpp"
#include "banet/train/trainer.hpp"
