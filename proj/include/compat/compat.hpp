#pragma once

#include "compat/checkpoint.hpp"
#include "compat/dataset.hpp"
#include "compat/error.hpp"
#include "compat/evaluator.hpp"
#include "compat/features.hpp"
#include "compat/gradcheck.hpp"
#include "compat/graph.hpp"
#include "compat/model.hpp"
#include "compat/optimizer.hpp"
#include "compat/parallel.hpp"
#include "compat/random.hpp"
#include "compat/synthetic.hpp"
#include "compat/tensor.hpp"
#include "compat/trainer.hpp"
