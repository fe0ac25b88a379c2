#pragma once

#include "pcnet/eval/components.hpp"
#include "pcnet/eval/metrics.hpp"
