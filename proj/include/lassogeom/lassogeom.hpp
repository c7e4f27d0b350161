#pragma once

#include "lassogeom/special.hpp"
#include "lassogeom/problem.hpp"
#include "lassogeom/radial.hpp"
#include "lassogeom/shifted.hpp"
#include "lassogeom/partition.hpp"
#include "lassogeom/lasso.hpp"
#include "lassogeom/mcmc.hpp"
