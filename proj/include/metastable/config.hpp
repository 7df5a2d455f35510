#pragma once

#include "metastable/diffusion.hpp"
#include "metastable/io.hpp"
#include "metastable/rare_event.hpp"

#include <string>
#include <vector>

namespace metastable {

/// A diffusion experiment as read from its JSON file.
struct ExperimentConfig {
    std::string scenario = "diffusion";
    DiffusionSystem system;
    std::vector<std::string> methods{"direct", "hill_qsd"};
    int n_transitions = 200;
    long n_loops = 20000;
    long burn_in = -1; ///< negative: 10 % of n_loops
    SplittingConfig splitting;
    std::uint64_t seed = 1;
    bool refine_dt = false; ///< also run direct simulation at dt / 2
    json source;

    long effective_burn_in() const { return burn_in >= 0 ? burn_in : n_loops / 10; }
};

/// System from a preset name and/or expressions. Rejects underdamped
/// dynamics with OutOfScope.
DiffusionSystem build_system(const json& j);

ExperimentConfig parse_experiment(const json& j);
ExperimentConfig load_experiment(const std::string& path);

} // namespace metastable
