// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "aems/autodiff.hpp"
#include "aems/batching.hpp"
#include "aems/checkpoint.hpp"
#include "aems/config.hpp"
#include "aems/corpus.hpp"
#include "aems/csv.hpp"
#include "aems/encoder.hpp"
#include "aems/error.hpp"
#include "aems/grad_check.hpp"
#include "aems/heads.hpp"
#include "aems/loss.hpp"
#include "aems/metrics.hpp"
#include "aems/model.hpp"
#include "aems/optimizer.hpp"
#include "aems/rubric.hpp"
#include "aems/synth.hpp"
#include "aems/tensor.hpp"
#include "aems/train_config.hpp"
#include "aems/trainer.hpp"
#include "aems/vocab.hpp"
