#pragma once

#include "herald/error.hpp"
#include "herald/random.hpp"
#include "herald/tensor.hpp"
#include "herald/ops.hpp"
#include "herald/hypergraph.hpp"
#include "herald/adaptor.hpp"
#include "herald/model.hpp"
#include "herald/dataset.hpp"
#include "herald/train.hpp"
