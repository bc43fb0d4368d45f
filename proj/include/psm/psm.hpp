#pragma once

#include "psm/ccm.hpp"
#include "psm/config.hpp"
#include "psm/correction.hpp"
#include "psm/discretization.hpp"
#include "psm/errors.hpp"
#include "psm/io.hpp"
#include "psm/linalg.hpp"
#include "psm/micromodulus.hpp"
#include "psm/microstructure.hpp"
#include "psm/multiscale.hpp"
#include "psm/pd_solver.hpp"
#include "psm/pipeline.hpp"
