#pragma once

#include "coftad/augment.hpp"
#include "coftad/checkpoint.hpp"
#include "coftad/config.hpp"
#include "coftad/data.hpp"
#include "coftad/density.hpp"
#include "coftad/encoder.hpp"
#include "coftad/error.hpp"
#include "coftad/eval.hpp"
#include "coftad/image.hpp"
#include "coftad/losses.hpp"
#include "coftad/pipeline.hpp"
#include "coftad/rng.hpp"
#include "coftad/tensor.hpp"
#include "coftad/train.hpp"
