#pragma once

#include "report.hpp"

namespace torusdyn::runner {

// Runs the configured task. Library failures end up in the report as numeric failures;
// ConfigError (bad task parameters) propagates.
RunReport run(const ExperimentConfig& cfg);

// JSON record of an orbit: theta0, T_min, k, monodromy, dP, verdicts, stability, residual.
Json orbit_json(const PeriodicOrbit& orbit);

}  // namespace torusdyn::runner
