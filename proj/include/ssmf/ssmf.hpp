#pragma once

#include "ssmf/dense.hpp"
#include "ssmf/error.hpp"
#include "ssmf/experiments.hpp"
#include "ssmf/matrix_io.hpp"
#include "ssmf/mnist.hpp"
#include "ssmf/model.hpp"
#include "ssmf/projections.hpp"
#include "ssmf/random.hpp"
#include "ssmf/solver.hpp"
#include "ssmf/synthetic.hpp"
