#pragma once

#include "types.hpp"
#include "geometry.hpp"
#include "problem.hpp"
#include "energy.hpp"
#include "discretization.hpp"
#include "solver.hpp"
#include "tab.hpp"
#include "fb_analysis.hpp"
#include "blowup.hpp"
#include "spec_io.hpp"
#include "snapshot.hpp"
