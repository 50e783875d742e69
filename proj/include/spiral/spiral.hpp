#pragma once

#include "spiral/errors.hpp"
#include "spiral/model.hpp"
#include "spiral/integrator.hpp"
#include "spiral/separatrix.hpp"
#include "spiral/solver.hpp"
#include "spiral/geometry.hpp"
