#pragma once

#include "metastable/config.hpp"
#include "metastable/io.hpp"
#include "metastable/kernel.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace metastable {

struct RunOptions {
    double tol = 1e-9;                  ///< threshold of every identity check
    std::optional<std::uint64_t> seed;  ///< overrides the seed in a config
    int workers = 1;
};

/// Everything the exact side computes for one kernel.
ScenarioReport analyze_kernel(const PartitionedKernel& k, const RunOptions& o, int scan_steps = 200,
                              double target_tv = 1e-8);

/// Closed-form comparison tables for the toy chains: "A1", "A1rev", "A2", "B".
ScenarioReport reproduce(const std::string& which, const Params& params, const RunOptions& o);

/// Direct and/or loop + splitting estimates of the mean reaction time.
ScenarioReport run_diffusion(const ExperimentConfig& c, const RunOptions& o);

/// Power iteration for the principal QSD of K_A with the projective bound.
ScenarioReport birkhoff_report(const PartitionedKernel& k, double target_tv, const RunOptions& o,
                               int audit_trials = 2000);

} // namespace metastable
