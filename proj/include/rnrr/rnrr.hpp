#pragma once

#include "rnrr/common.hpp"
#include "rnrr/correspondence.hpp"
#include "rnrr/energy.hpp"
#include "rnrr/eval.hpp"
#include "rnrr/geodesics.hpp"
#include "rnrr/geometry_io.hpp"
#include "rnrr/graph.hpp"
#include "rnrr/kdtree.hpp"
#include "rnrr/lbfgs.hpp"
#include "rnrr/solver.hpp"
#include "rnrr/transform_state.hpp"
