// Command-line runner: one subcommand per task.
// Exit codes: 0 all checks pass, 1 audit failure, 2 usage or configuration error, 3 numeric failure.

#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "runner/tasks.hpp"

namespace {

const std::map<std::string, std::string> kDescriptions{
    {"regularity-scan", "check that an energy level is regular and verify the normal-field identities"},
    {"orbit-scan", "seeded search for short periodic orbits on a level"},
    {"classify", "find one orbit, classify stability and nondegeneracy, locate twist times"},
    {"perturb-nondegeneracy", "make a degenerate orbit nondegenerate with a small localized potential"},
    {"B-surjectivity", "check that the localized perturbations span a complement of the flow direction"},
    {"piZ-check", "compare the first-order monodromy change with its closed form"},
    {"manifold-splitting", "split coincident stable and unstable manifolds with a graph potential"},
};

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::vector<std::string> overrides;
};

int execute(const std::string& task, const Flags& f) {
    using namespace torusdyn::runner;
    auto cfg = load_config(f.config, task);
    if (!f.out.empty()) cfg.output = f.out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.jobs) cfg.jobs = *f.jobs;
    for (const auto& o : f.overrides) apply_tolerance_override(cfg, o);

    const RunReport rep = run(cfg);
    write_outputs(rep, cfg.output);

    std::cout << task << ": " << rep.status << " (" << rep.audit.entries().size() << " checks, "
              << rep.audit.failures() << " failed)\n";
    for (const auto& e : rep.audit.entries())
        if (!e.pass)
            std::cout << "  FAIL " << e.check << ": " << format_number(e.measured) << ' ' << e.relation << ' '
                      << format_number(e.limit) << '\n';
    if (!rep.error.empty()) std::cout << "  error: " << rep.error << '\n';
    std::cout << "  output: " << cfg.output.string() << '\n';

    if (rep.status == "numeric-failure") return 3;
    return rep.audit.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Numerical experiments on mechanical Hamiltonians on the two-torus"};
    app.require_subcommand(1);
    Flags flags;
    std::string chosen;
    for (const auto& name : torusdyn::runner::task_names()) {
        auto* sub = app.add_subcommand(name, kDescriptions.at(name));
        sub->add_option("--config", flags.config, "JSON experiment file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", flags.out, "output directory (overrides the config)");
        sub->add_option("--seed", flags.seed, "random seed (overrides the config)");
        sub->add_option("--jobs", flags.jobs, "worker threads, 0 = hardware concurrency");
        sub->add_option("--tol-override", flags.overrides, "tolerance override KEY=VALUE")->take_all();
        sub->callback([&chosen, name] { chosen = name; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        return execute(chosen, flags);
    } catch (const torusdyn::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const torusdyn::Error& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
