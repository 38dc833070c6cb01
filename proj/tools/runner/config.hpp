#pragma once
// Experiment configuration: schema validation, system construction and the tolerance table.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusdyn/manifolds.hpp"
#include "torusdyn/perturb.hpp"

namespace torusdyn::runner {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names{"regularity-scan", "orbit-scan",  "classify",
                                                "perturb-nondegeneracy", "B-surjectivity", "piZ-check",
                                                "manifold-splitting"};
    return names;
}

struct ToleranceInfo {
    std::string name;
    double default_value;
    std::string meaning;
};

// Every tolerance the checks use, with its default.
const std::vector<ToleranceInfo>& tolerance_registry();

class Tolerances {
public:
    Tolerances();
    double operator[](const std::string& name) const;
    // ConfigError for unknown names or non-positive values.
    void set(const std::string& name, double value);
    bool overridden(const std::string& name) const { return overridden_.count(name) > 0; }
    Json to_json() const;

    IntegratorOptions integrator() const;
    OrbitOptions orbit(int m_max) const;

private:
    std::map<std::string, double> values_;
    std::map<std::string, bool> overridden_;
};

struct ExperimentConfig {
    std::string task;
    Json system;           // as given
    double energy = 0.0;
    std::uint64_t seed = 0;
    unsigned jobs = 0;
    std::filesystem::path output = "out";
    Tolerances tol;
    Json params;           // task parameters with defaults filled in

    Json echo() const;
};

// Validates against the schema (unknown keys rejected at every level); ConfigError on failure.
ExperimentConfig parse_config(const Json& doc, const std::string& task);
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& task);

// "KEY=VALUE" into the tolerance table.
void apply_tolerance_override(ExperimentConfig& cfg, const std::string& assignment);

MechanicalSystem build_system(const Json& spec);

// Default parameters of a task; also the set of accepted parameter keys.
Json default_params(const std::string& task);

}  // namespace torusdyn::runner
