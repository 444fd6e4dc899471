#pragma once

#include "isoplane/engine/adam.hpp"
#include "isoplane/engine/checkpoint.hpp"
#include "isoplane/engine/conv.hpp"
#include "isoplane/engine/ops.hpp"
#include "isoplane/engine/tensor.hpp"
