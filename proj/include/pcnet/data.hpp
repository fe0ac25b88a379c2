#pragma once

#include "pcnet/data/augment.hpp"
#include "pcnet/data/image.hpp"
#include "pcnet/data/preprocess.hpp"
#include "pcnet/data/sampling.hpp"
#include "pcnet/data/synth.hpp"
