#ifndef SWBSDE_SWITCHBSDE_HPP
#define SWBSDE_SWITCHBSDE_HPP

#include "rng.hpp"
#include "mpp.hpp"
#include "problem.hpp"
#include "lattice.hpp"
#include "validation.hpp"
#include "evaluation.hpp"
#include "bsde.hpp"
#include "oracle.hpp"
#include "switching.hpp"
#include "instances.hpp"

#endif  // SWBSDE_SWITCHBSDE_HPP
