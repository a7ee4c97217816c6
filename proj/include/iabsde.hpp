#ifndef IABSDE_HPP
#define IABSDE_HPP

/**
 * @file iabsde.hpp
 * @brief Convenience umbrella: the whole library in one include.
 *
 * Individual headers stay independently includable; pull in just
 * iabsde/solver.hpp (say) when compile time matters.
 */

#include "iabsde/analysis.hpp"
#include "iabsde/brownian.hpp"
#include "iabsde/config.hpp"
#include "iabsde/control.hpp"
#include "iabsde/csv.hpp"
#include "iabsde/duality.hpp"
#include "iabsde/errors.hpp"
#include "iabsde/experiments.hpp"
#include "iabsde/generator.hpp"
#include "iabsde/grid.hpp"
#include "iabsde/instances.hpp"
#include "iabsde/kernels.hpp"
#include "iabsde/montecarlo.hpp"
#include "iabsde/norms.hpp"
#include "iabsde/parallel.hpp"
#include "iabsde/paths.hpp"
#include "iabsde/philox.hpp"
#include "iabsde/projection.hpp"
#include "iabsde/sdde.hpp"
#include "iabsde/solver.hpp"
#include "iabsde/terminal.hpp"
#include "iabsde/version.hpp"

#endif  // IABSDE_HPP
