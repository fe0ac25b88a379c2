#pragma once

// PSE / SE / coarse-to-fine blocks, the ablation-ladder networks, the
// deep-supervised objective, complexity counting, checkpoints and
// sliding-window inference.

#include "pcnet/model/checkpoint.hpp"
#include "pcnet/model/complexity.hpp"
#include "pcnet/model/inference.hpp"
#include "pcnet/model/layers.hpp"
#include "pcnet/model/network.hpp"
#include "pcnet/model/objective.hpp"
