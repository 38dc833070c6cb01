// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <limits>
#include <random>
#include <sstream>

#include "runner/tasks.hpp"
#include "torusdyn/flow.hpp"
#include "torusdyn/orbit.hpp"
#include "torusdyn/symplectic.hpp"

using namespace torusdyn;
using runner::Json;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Appends "name=value" to the detail and folds the verdict in.
struct Recorder {
    Outcome out;
    void note(const std::string& what, double value, bool ok) {
        out.detail += (out.detail.empty() ? "" : "; ") + what + "=" + runner::format_number(value);
        if (!ok) {
            out.detail += " (FAIL)";
            out.pass = false;
        }
    }
    void fail(const std::string& what) {
        out.detail += (out.detail.empty() ? "" : "; ") + what;
        out.pass = false;
    }
};

struct TestSystem {
    std::string name;
    MechanicalSystem sys;
    Json spec;
    double energy;
    Vec4 guess;
    double guess_period;
};

const std::vector<TestSystem>& oracle_systems() {
    static const std::vector<TestSystem> s{
        {"free", systems::free_particle(), {{"preset", "free-particle"}}, 0.5, Vec4(0, 0, 1, 0), kTwoPi},
        {"S1", systems::pendulum_rotor(), {{"preset", "pendulum-rotor"}}, 1.5, Vec4(kPi, 0, 0, 1), kTwoPi},
        {"S3", systems::anisotropic(), {{"preset", "anisotropic"}}, 1.5, Vec4(kPi, 0, 0, 2 * std::sqrt(0.4)), 8.9},
    };
    return s;
}

Json vec_json(const Vec4& v) { return Json::array({v(0), v(1), v(2), v(3)}); }

runner::RunReport run_task(const std::string& task, const TestSystem& ts, Json params,
                           const std::vector<std::pair<std::string, double>>& pins) {
    Json doc = {{"task", task}, {"system", ts.spec}, {"energy", ts.energy}, {"seed", 1}, {"params", params}};
    auto cfg = runner::parse_config(doc, task);
    for (const auto& [k, v] : pins) cfg.tol.set(k, v);
    return runner::run(cfg);
}

// Records the report verdict and the failing audit lines.
void absorb(Recorder& r, const std::string& label, const runner::RunReport& rep) {
    if (rep.status == "ok") return;
    std::string msg = label + ": " + rep.status;
    if (!rep.error.empty()) msg += " (" + rep.error + ")";
    for (const auto& e : rep.audit.entries())
        if (!e.pass)
            msg += " [" + e.check + ": " + runner::format_number(e.measured) + " " + e.relation + " " +
                   runner::format_number(e.limit) + "]";
    r.fail(msg);
}

double worst_audit(const runner::RunReport& rep, const std::string& prefix) {
    double w = 0.0;
    for (const auto& e : rep.audit.entries())
        if (e.check.rfind(prefix, 0) == 0) w = std::max(w, e.measured);
    return w;
}

Vec4 random_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(0.0, kTwoPi), up(-2.0, 2.0);
    const double x1 = ux(rng), x2 = ux(rng), p1 = up(rng), p2 = up(rng);
    return {x1, x2, p1, p2};
}

OrbitOptions orbit_options(int m_max) {
    runner::Tolerances tol;
    return tol.orbit(m_max);
}

// ---- criteria ----

Outcome symplecticity() {
    Recorder r;
    IntegratorOptions opt;
    opt.tol = 1e-14;
    for (const auto& ts : oracle_systems()) {
        std::mt19937_64 rng(101);
        std::uniform_real_distribution<double> ut(0.0, 50.0);
        double defect = 0.0, drift = 0.0, defect_double = 0.0;
        for (int i = 0; i < 100; ++i) {
            const Vec4 z = random_state(rng);
            const double T = ut(rng);
            const auto v = integrate_variational<long double>(ts.sys, z.cast<long double>(), (long double)T, opt);
            defect = std::max(defect, double(symplectic_defect(v.M)));
            defect_double = std::max(defect_double, symplectic_defect(integrate_variational(ts.sys, z, T).M));
            const double h0 = ts.sys.hamiltonian(z);
            drift = std::max(drift, std::abs(ts.sys.hamiltonian(v.z.cast<double>()) - h0) / std::max(1.0, std::abs(h0)));
        }
        r.note(ts.name + " |M^T J M - J|", defect, defect <= 1e-8);
        r.note(ts.name + " drift", drift, drift <= 1e-9);
        // informational: plain double at the default step tolerance
        r.note(ts.name + " defect in double", defect_double, true);
    }
    return r.out;
}

Outcome normal_field_identities() {
    Recorder r;
    for (const auto& ts : oracle_systems()) {
        std::mt19937_64 rng(202);
        double w = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const Vec4 z = random_state(rng);
            const Vec4 Y = normal_field(ts.sys, z);
            w = std::max(w, std::abs(omega(Y, hamiltonian_field(ts.sys, z)) - Y.squaredNorm()));
        }
        r.note(ts.name + " omega(Y,X)", w, w <= 1e-10);

        const auto orbit = find_periodic_orbit(ts.sys, ts.energy, ts.guess, ts.guess_period, orbit_options(12));
        const double fi = frame_invariants(ts.sys, orbit).max();
        r.note(ts.name + " frame", fi, fi <= 1e-7);

        double germ = 0.0;
        bool monotone = true;
        for (int i = 0; i < 20; ++i) {
            const Vec4 z = random_state(rng);
            if (ts.sys.gradient(z).norm() < 1e-3) continue;
            const auto g = normal_germ(ts.sys, z);
            germ = std::max(germ, std::abs(g.slope - g.expected));
            monotone = monotone && g.monotone;
        }
        r.note(ts.name + " e'(0)", germ, germ <= 1e-8);
        if (!monotone) r.fail(ts.name + " germ not monotone");
    }
    return r.out;
}

Outcome oracle_orbit() {
    Recorder r;
    const auto& s1 = oracle_systems()[1];
    const auto o = find_periodic_orbit(s1.sys, 1.5, s1.guess, s1.guess_period, orbit_options(20));
    const double Tmin = minimal_period(s1.sys, o, orbit_options(20));
    r.note("|T_min - 2pi|", std::abs(Tmin - kTwoPi), std::abs(Tmin - kTwoPi) <= 1e-8);
    // linearization about the upright pendulum: x'' = x over one rotor period
    const double up = std::exp(kTwoPi), down = std::exp(-kTwoPi);
    const auto ev = eigenvalues2(o.dP);
    double big = std::max(std::abs(ev[0]), std::abs(ev[1])), small = std::min(std::abs(ev[0]), std::abs(ev[1]));
    r.note("rel err e^{2pi}", std::abs(big - up) / up, std::abs(big - up) / up <= 1e-5);
    r.note("rel err e^{-2pi}", std::abs(small - down) / down, std::abs(small - down) / down <= 1e-5);
    if (o.stability != Stability::Hyperbolic) r.fail("stability " + to_string(o.stability));
    int nondeg = 0;
    for (const auto& v : o.verdicts) nondeg += v.nondegenerate && v.cross_check_nondegenerate;
    r.note("nondegenerate orders", nondeg, nondeg == 20 && o.verdicts.size() == 20);
    return r.out;
}

Outcome degeneracy_detection() {
    Recorder r;
    const auto& fp = oracle_systems()[0];
    const auto o = find_periodic_orbit(fp.sys, 0.5, fp.guess, fp.guess_period, orbit_options(12));
    int degenerate = 0, agree = 0;
    for (const auto& v : o.verdicts) {
        degenerate += !v.nondegenerate && !v.cross_check_nondegenerate;
        agree += v.agree();
    }
    r.note("degenerate orders (both tests)", degenerate, degenerate == 12 && o.verdicts.size() == 12);
    r.note("agreement", 100.0 * agree / double(o.verdicts.size()), agree == int(o.verdicts.size()));
    return r.out;
}

Outcome charpoly_relation() {
    Recorder r;
    const std::array<double, 3> t_max{7.0, 7.0, 9.5};
    for (std::size_t s = 0; s < oracle_systems().size(); ++s) {
        const auto& ts = oracle_systems()[s];
        const auto scan = scan_short_orbits(ts.sys, ts.energy, t_max[s], 2, orbit_options(12));
        double w = 0.0;
        for (const auto& o : scan.orbits)
            for (int m = 1; m <= 3; ++m) w = std::max(w, charpoly_factorization_residual(o, m));
        r.note(ts.name + " orbits", double(scan.orbits.size()), !scan.orbits.empty());
        r.note(ts.name + " residual", w, w <= 1e-5);
    }
    return r.out;
}

Outcome b_complementarity() {
    Recorder r;
    for (std::size_t s : {1, 2}) {
        const auto& ts = oracle_systems()[s];
        const auto rep = run_task("B-surjectivity", ts,
                                  {{"guess", vec_json(ts.guess)}, {"guess_period", ts.guess_period},
                                   {"eps_factors", {1.0, 0.5, 0.25}}},
                                  {{"eps_delta_factor", 1e-2}, {"tangency_tol", 1e-7}, {"convergence_order_min", 0.9}});
        absorb(r, ts.name, rep);
        if (rep.status == "numeric-failure") continue;
        r.note(ts.name + " tangency", worst_audit(rep, "|dH . B|"), true);
        double order = 1e300;
        for (const auto& o : rep.results["convergence_orders"]) order = std::min(order, o["order"].get<double>());
        r.note(ts.name + " min order", order, true);
    }
    return r.out;
}

Outcome piz_verification() {
    Recorder r;
    const auto& fp = oracle_systems()[0];
    const std::vector<std::pair<std::string, double>> pins{
        {"symbolic_tol", 1e-12}, {"piZ_floor", 1e-4}, {"piZ_slope", 1.0}, {"rank_sv_min", 1e-4}};
    const auto a = run_task("piZ-check", fp,
                            {{"guess", vec_json(fp.guess)}, {"guess_period", fp.guess_period}, {"expect_symbolic", true}},
                            pins);
    absorb(r, "(a) free", a);
    if (a.status != "numeric-failure") r.note("(a) symbolic", worst_audit(a, "pi(Z) against [[-b"), true);
    for (std::size_t s : {1, 2}) {
        const auto& ts = oracle_systems()[s];
        const auto b = run_task("piZ-check", ts, {{"guess", vec_json(ts.guess)}, {"guess_period", ts.guess_period}},
                                pins);
        absorb(r, ts.name, b);
        if (b.status == "numeric-failure") continue;
        r.note("(b) " + ts.name + " fd rel", b.results["first_order"]["relative_error"].get<double>(), true);
        const auto& sv = b.results["dS"]["singular_values"];
        r.note("(c) " + ts.name + " sigma_min", sv.back().get<double>(), true);
    }
    return r.out;
}

Outcome nondegeneracy_restoration() {
    Recorder r;
    const auto& fp = oracle_systems()[0];
    const auto rep = run_task("perturb-nondegeneracy", fp,
                              {{"guess", vec_json(fp.guess)}, {"guess_period", fp.guess_period}, {"m", 2},
                               {"budget", 1e-2}},
                              {{"persistence_tol", 1e-8}, {"repair_margin", 1e-3}});
    absorb(r, "free", rep);
    if (rep.status != "numeric-failure" && rep.results["repair"].contains("min_margin")) {
        r.note("residual", rep.results["repair"]["orbit"]["residual"].get<double>(), true);
        double margin = std::numeric_limits<double>::infinity();
        for (const auto& e : rep.audit.entries())
            if (e.check.rfind("|lambda^m - 1|", 0) == 0) margin = std::min(margin, e.measured);
        r.note("min |lambda^m - 1|, m<=4", margin, true);
    }
    return r.out;
}

Outcome manifold_splitting() {
    Recorder r;
    const auto& s1 = oracle_systems()[1];
    const auto rep = run_task("manifold-splitting", s1,
                              {{"orbit1", {{"guess", vec_json(s1.guess)}, {"guess_period", s1.guess_period}}},
                               {"tilts", {0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2}},
                               {"transversal_tilt", 1e-3},
                               {"expect_tangential", true}},
                              {{"tol_angle", 1e-4}, {"persistence_tol", 1e-8}, {"linearity_r2", 0.99}});
    absorb(r, "S1 x rotor", rep);
    if (rep.status == "numeric-failure") return r.out;
    for (const auto& run : rep.results["runs"]) {
        if (run["tilt"].get<double>() == 0.0) r.note("angle before", run["max_angle_before"].get<double>(), true);
        if (run["tilt"].get<double>() == 1e-3) {
            r.note("angle at tilt 1e-3", run["max_angle_after"].get<double>(), true);
            r.note("period change", std::max(run["period_change"][0].get<double>(), run["period_change"][1].get<double>()),
                   true);
        }
    }
    r.note("R^2", rep.results["angle_vs_tilt_r2"].get<double>(), true);
    return r.out;
}

Outcome twist_discreteness() {
    Recorder r;
    std::vector<std::pair<std::string, MechanicalSystem>> all{
        {"free", systems::free_particle()},
        {"S1", systems::pendulum_rotor()},
        {"S2", systems::coupled_pendulum_rotor(0.01)},
        {"S3", systems::anisotropic()},
        {"wells", systems::twin_wells(1.0, std::sqrt(2.0))}};
    int cases = 0, roots = 0;
    for (const auto& [name, sys] : all) {
        std::mt19937_64 rng(303);
        std::vector<Vec4> points{Vec4(kPi, 0, 0, 1), Vec4(0, 0, 1, 0)};
        for (int i = 0; i < 3; ++i) points.push_back(random_state(rng));
        for (const auto& z : points) {
            const auto tw = twist_times(sys, z, Vec4::Unit(2), Vec4::Unit(3), 50.0);
            ++cases;
            roots += int(tw.roots.size());
            bool isolated = true;
            for (std::size_t i = 1; i < tw.roots.size(); ++i) isolated = isolated && tw.roots[i] > tw.roots[i - 1];
            if (tw.non_discrete || !isolated) r.fail(name + " flagged non-discrete");
        }
    }
    r.note("cases", cases, true);
    r.note("roots", roots, true);
    return r.out;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism() {
    Recorder r;
    const std::filesystem::path work = ACCEPTANCE_WORK_DIR;
    std::filesystem::remove_all(work);
    int configs = 0, files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        const Json doc = Json::parse(slurp(entry.path()));
        const std::string task = doc["task"].get<std::string>();
        const std::string stem = entry.path().stem().string();
        std::array<std::filesystem::path, 2> dirs{work / (stem + "_a"), work / (stem + "_b")};
        const std::array<int, 2> jobs{1, 4};
        for (int k = 0; k < 2; ++k) {
            std::ostringstream cmd;
            cmd << '"' << CLI_PATH << "\" " << task << " --config \"" << entry.path().string() << "\" --out \""
                << dirs[k].string() << "\" --jobs " << jobs[k] << " > /dev/null 2>&1";
            const int rc = std::system(cmd.str().c_str());
            if (rc != 0) r.fail(stem + " exited with status " + std::to_string(rc));
        }
        ++configs;
        for (const auto& f : std::filesystem::directory_iterator(dirs[0])) {
            const auto name = f.path().filename();
            if (name == "timing.json") continue;
            ++files;
            if (!std::filesystem::exists(dirs[1] / name) || slurp(f.path()) != slurp(dirs[1] / name))
                r.fail(stem + "/" + name.string() + " differs");
        }
    }
    r.note("configs", configs, configs > 0);
    r.note("files compared", files, files > 0);
    return r.out;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"symplecticity and energy conservation", symplecticity},
        {"normal-field identities", normal_field_identities},
        {"oracle orbit on the pendulum x rotor", oracle_orbit},
        {"degeneracy detection", degeneracy_detection},
        {"characteristic-polynomial relation", charpoly_relation},
        {"B(h) complementarity", b_complementarity},
        {"pi(Z) verification", piz_verification},
        {"nondegeneracy restoration", nondegeneracy_restoration},
        {"manifold splitting", manifold_splitting},
        {"twist discreteness", twist_discreteness},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::cout << "criterion " << i + 1 << " [" << (o.pass ? "PASS" : "FAIL") << "] " << criteria[i].first << ": "
                  << o.detail << " (" << runner::format_number(std::round(secs * 10) / 10) << " s)" << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
