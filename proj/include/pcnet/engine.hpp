#pragma once

// Dense tensors, reverse-mode tape, the differentiable op set, and Adam.

#include "pcnet/engine/adam.hpp"
#include "pcnet/engine/batch_norm.hpp"
#include "pcnet/engine/conv.hpp"
#include "pcnet/engine/loss.hpp"
#include "pcnet/engine/pctn_io.hpp"
#include "pcnet/engine/pointwise.hpp"
#include "pcnet/engine/pooling.hpp"
#include "pcnet/engine/tape.hpp"
#include "pcnet/engine/tensor.hpp"
#include "pcnet/engine/upsample.hpp"
