#pragma once

#include "quadscale/core.hpp"
#include "quadscale/geometry.hpp"
#include "quadscale/priors.hpp"
#include "quadscale/scale.hpp"
#include "quadscale/optimizer.hpp"
#include "quadscale/sim.hpp"
#include "quadscale/eval.hpp"
