#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace torusdyn::runner {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

void check_keys(const Json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) fail(where + ": expected an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) fail(where + ": unknown key '" + key + "'");
}

double number(const Json& v, const std::string& where) {
    if (!v.is_number()) fail(where + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(where + ": not finite");
    return x;
}

std::vector<Harmonic> harmonics(const Json& arr, const std::string& where) {
    if (!arr.is_array()) fail(where + ": expected an array of [k1, k2, cos, sin]");
    std::vector<Harmonic> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& h = arr[i];
        const std::string w = where + "[" + std::to_string(i) + "]";
        if (!h.is_array() || h.size() != 4) fail(w + ": expected [k1, k2, cos, sin]");
        if (!h[0].is_number_integer() || !h[1].is_number_integer()) fail(w + ": wave numbers must be integers");
        out.push_back({h[0].get<int>(), h[1].get<int>(), number(h[2], w), number(h[3], w)});
    }
    return out;
}

PotentialPtr potential_term(const Json& spec, const std::string& where) {
    if (!spec.is_object() || !spec.contains("kind")) fail(where + ": potential needs a 'kind'");
    const std::string kind = spec["kind"].is_string() ? spec["kind"].get<std::string>() : "";
    if (kind == "trig-polynomial") {
        check_keys(spec, {"kind", "harmonics"}, where);
        return std::make_shared<TrigPotential>(harmonics(spec.value("harmonics", Json::array()), where + ".harmonics"));
    }
    if (kind == "radial-bump") {
        check_keys(spec, {"kind", "center", "radius", "height"}, where);
        const auto& c = spec.at("center");
        if (!c.is_array() || c.size() != 2) fail(where + ".center: expected [x1, x2]");
        const double r = number(spec.at("radius"), where + ".radius");
        if (r <= 0) fail(where + ".radius: must be positive");
        return std::make_shared<RadialBump>(Vec2(number(c[0], where), number(c[1], where)), r,
                                            number(spec.at("height"), where + ".height"));
    }
    if (kind == "constant") {
        check_keys(spec, {"kind", "value"}, where);
        return std::make_shared<ConstantPotential>(number(spec.at("value"), where + ".value"));
    }
    fail(where + ": unknown potential kind '" + kind + "'");
}

bool same_type(const Json& given, const Json& def) {
    if (def.is_number()) return given.is_number();
    return given.type() == def.type();
}

}  // namespace

const std::vector<ToleranceInfo>& tolerance_registry() {
    static const std::vector<ToleranceInfo> reg{
        {"integrator_tol", 1e-10, "adaptive step tolerance (absolute and relative)"},
        {"tol_symp", 1e-8, "max |M^T J M - J| of flow differentials"},
        {"tol_energy", 1e-9, "relative energy drift along trajectories"},
        {"det_tol", 1e-6, "|det M - 1| and |det dP - 1|"},
        {"fd_tol", 1e-5, "variational columns against finite differences of the flow"},
        {"derivative_tol", 1e-6, "analytic H derivatives against central differences (relative)"},
        {"support_tol", 1e-12, "|term| outside its declared support"},
        {"eps_normal", 0.1, "half-width of the normal-flow time interval"},
        {"omega_tol", 1e-10, "omega(Y, X) = |grad H|^2 (relative)"},
        {"germ_tol", 1e-8, "slope of e(s) = H(normal flow) at 0 against |grad H|^2"},
        {"newton_tol", 1e-10, "Newton residual norm for orbit convergence"},
        {"closure_tol", 1e-8, "|psi_T(theta0) - theta0| of found orbits"},
        {"level_tol", 1e-9, "|H(theta0) - k| of found orbits"},
        {"gram_tol", 1e-8, "frame Gram matrix against J"},
        {"frame_tol", 1e-7, "frame invariants (i)-(iv) along an orbit"},
        {"tangent_tol", 1e-9, "dH(u2), dH(u2s) level tangency"},
        {"tol_root", 1e-6, "|lambda^m - 1| threshold for degeneracy"},
        {"tol_stability", 1e-6, "|tr dP| against 2 for the stability class"},
        {"charpoly_tol", 1e-5, "characteristic-polynomial factorization residual (relative)"},
        {"tol_reg", 1e-5, "min |grad H| on a regular level"},
        {"dedup_radius", 1e-4, "orbit identity radius (Hausdorff distance)"},
        {"multiplier_rel_tol", 1e-5, "found multipliers against expected values (relative)"},
        {"delta_moment_tol", 1e-8, "zeroth moment of the mollified delta"},
        {"eps_delta_factor", 1e-2, "mollifier width as a fraction of the minimal period"},
        {"chart_tol", 1e-7, "dh . H_p on the base curve"},
        {"jet_value_tol", 1e-10, "|h(x(t))| of generated potentials on the orbit"},
        {"jet_gradient_tol", 1e-7, "|d h(x(t))| of generated potentials on the orbit (times scale)"},
        {"tangency_tol", 1e-7, "|dH . B(h)| / |B(h)|"},
        {"complement_rank_tol", 1e-8, "relative singular-value cutoff of the complement Gram matrix"},
        {"flow_residual_min", 1e-3, "least-squares residual of X^H in span B(h) (lower bound)"},
        {"convergence_order_min", 0.9, "observed order of B(h) against the delta-limit formulas"},
        {"trace_tol", 1e-8, "|tr pi(Z)|"},
        {"commutator_tol", 1e-7, "closed-form pi(Z) against the commutator reduction"},
        {"symbolic_tol", 1e-12, "free-particle pi(Z) against [[-b, 2c], [-a, b]]"},
        {"piZ_floor", 1e-4, "floor of the first-order monodromy prediction tolerance (relative)"},
        {"piZ_slope", 1.0, "C in max(floor, C eps_delta) for the first-order prediction"},
        {"rank_sv_min", 1e-4, "smallest singular value of dS"},
        {"rank_rel_tol", 1e-10, "relative singular-value cutoff for the rank of dS"},
        {"repair_margin", 1e-3, "required |lambda^m - 1| after the nondegeneracy repair"},
        {"persistence_tol", 1e-8, "closure and period change of orbits under added potentials"},
        {"manifold_seed_tol", 1e-9, "first-iterate deviation of a branch seed from the tangent line"},
        {"reciprocity_tol", 1e-6, "|lambda_u lambda_s - 1|"},
        {"contraction_slack", 0.1, "stable contraction over 5 returns against |lambda_s|^5 (1 + slack)"},
        {"invariance_tol", 1e-6, "branch invariance and fundamental-domain endpoint defect"},
        {"tol_angle", 1e-4, "crossing angle separating tangential from transversal (rad)"},
        {"contact_tol", 1e-6, "curve distance treated as contact"},
        {"graph_level_tol", 1e-8, "(H + f)(x, p(x)) - k on the plateau"},
        {"graph_invariance_tol", 1e-5, "graph points flowed under H + f against the graph"},
        {"blend_tol", 0.1, "|H(x, p(x)) - k| allowed in the blend collar"},
        {"linearity_r2", 0.99, "R^2 of the angle against tilt (lower bound)"},
    };
    return reg;
}

Tolerances::Tolerances() {
    for (const auto& t : tolerance_registry()) values_[t.name] = t.default_value;
}

double Tolerances::operator[](const std::string& name) const {
    const auto it = values_.find(name);
    if (it == values_.end()) throw std::logic_error("unregistered tolerance " + name);
    return it->second;
}

void Tolerances::set(const std::string& name, double value) {
    if (!values_.count(name)) fail("unknown tolerance '" + name + "'");
    if (!(value > 0) || !std::isfinite(value)) fail("tolerance '" + name + "' must be positive and finite");
    values_[name] = value;
    overridden_[name] = true;
}

Json Tolerances::to_json() const {
    Json out = Json::object();
    for (const auto& t : tolerance_registry())
        out[t.name] = {{"value", values_.at(t.name)}, {"default", t.default_value},
                       {"overridden", overridden(t.name)}, {"meaning", t.meaning}};
    return out;
}

IntegratorOptions Tolerances::integrator() const {
    IntegratorOptions o;
    o.tol = (*this)["integrator_tol"];
    return o;
}

OrbitOptions Tolerances::orbit(int m_max) const {
    OrbitOptions o;
    o.integ = integrator();
    o.newton_tol = (*this)["newton_tol"];
    o.closure_tol = (*this)["closure_tol"];
    o.energy_tol = (*this)["level_tol"];
    o.tol_root = (*this)["tol_root"];
    o.tol_stability = (*this)["tol_stability"];
    o.eps_normal = (*this)["eps_normal"];
    o.m_max = m_max;
    return o;
}

Json ExperimentConfig::echo() const {
    Json tols = Json::object();
    for (const auto& t : tolerance_registry())
        if (tol.overridden(t.name)) tols[t.name] = tol[t.name];
    // jobs and the output directory do not affect results; they go to timing.json
    return {{"task", task}, {"system", system}, {"energy", energy}, {"seed", seed}, {"tolerances", tols},
            {"params", params}};
}

Json default_params(const std::string& task) {
    const Json guess = {{"guess", Json::array({kPi, 0.0, 0.0, 1.0})}, {"guess_period", kTwoPi}};
    if (task == "regularity-scan")
        return {{"grid_density", 16}, {"random_points", 1000}, {"germ_points", 20}, {"expect_regular", ""}};
    if (task == "orbit-scan")
        return {{"T_max", 10.0}, {"grid_density", 2}, {"m_max", 12}, {"expect", Json::array()}};
    if (task == "classify") {
        Json p = guess;
        p.update({{"m_max", 12}, {"expect_stability", ""}, {"expect_nondegenerate", ""},
                  {"twist_horizon", 50.0}, {"twist_step", 0.01}});
        return p;
    }
    if (task == "perturb-nondegeneracy") {
        Json p = guess;
        p.update({{"m", 2}, {"budget", 1e-2}, {"tube_radius", 0.2}});
        return p;
    }
    if (task == "B-surjectivity") {
        Json p = guess;
        p.update({{"t0_fraction", 0.4}, {"eps_factors", Json::array({1.0, 0.5, 0.25})}, {"tube_radius", 0.2}});
        return p;
    }
    if (task == "piZ-check") {
        Json p = guess;
        p.update({{"t1_fraction", 0.4},
                  {"tube_radius", 0.2},
                  {"coefficients", Json::array({Json::array({1, 0, 0}), Json::array({0, 1, 0}), Json::array({0, 0, 1}),
                                                Json::array({1, 1, 1}), Json::array({0.6, -0.4, 0.3})})},
                  {"expect_symbolic", false},
                  {"fd_direction", Json::array({0.6, -0.4, 0.3})},
                  {"fd_step", 1e-4},
                  {"sweep_direction", Json::array({1.0, 0.0, 0.0})},
                  {"sweep_amplitudes", Json::array({-0.04, -0.02, 0.0, 0.02, 0.04})}});
        return p;
    }
    if (task == "manifold-splitting")
        return {{"orbit1", guess},
                {"orbit2", Json::object()},
                {"section_x2", 0.0},
                {"center", Json::array({kTwoPi - 0.8, -0.6})},
                {"inner", 0.35},
                {"outer", 0.5},
                {"bump_radius_factor", 0.25},
                {"tilts", Json::array({0.0, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2})},
                {"unstable_radius", 6.0},
                {"stable_radius", 6.0},
                {"unstable_sign", 1},
                {"stable_sign", -1},
                {"graph", "fit"},
                {"expect_tangential", true},
                {"transversal_tilt", 1e-3}};
    fail("unknown task '" + task + "'");
}

namespace {

MechanicalSystem build_system_unchecked(const Json& spec) {
    check_keys(spec, {"preset", "parameters", "metric", "potentials"}, "system");
    MechanicalSystem base;
    if (spec.contains("preset")) {
        if (spec.contains("metric")) fail("system: 'preset' and 'metric' are exclusive");
        const auto& pr = spec["preset"];
        if (!pr.is_string()) fail("system.preset: expected a string");
        const std::string name = pr.get<std::string>();
        const Json par = spec.value("parameters", Json::object());
        auto param = [&](const char* key, double def) {
            return par.contains(key) ? number(par[key], std::string("system.parameters.") + key) : def;
        };
        if (name == "free-particle") {
            check_keys(par, {}, "system.parameters");
            base = systems::free_particle();
        } else if (name == "pendulum-rotor") {
            check_keys(par, {}, "system.parameters");
            base = systems::pendulum_rotor();
        } else if (name == "coupled-pendulum-rotor") {
            check_keys(par, {"eps"}, "system.parameters");
            base = systems::coupled_pendulum_rotor(param("eps", 0.01));
        } else if (name == "anisotropic") {
            check_keys(par, {}, "system.parameters");
            base = systems::anisotropic();
        } else if (name == "twin-wells") {
            check_keys(par, {"w1", "w2"}, "system.parameters");
            base = systems::twin_wells(param("w1", 1.0), param("w2", std::sqrt(2.0)));
        } else {
            fail("system.preset: unknown preset '" + name + "'");
        }
    } else {
        if (spec.contains("parameters")) fail("system.parameters: only valid with a preset");
        MetricInverse g;
        if (spec.contains("metric")) {
            const auto& m = spec["metric"];
            check_keys(m, {"g11", "g12", "g22"}, "system.metric");
            if (m.contains("g11")) g.g11 = harmonics(m["g11"], "system.metric.g11");
            if (m.contains("g12")) g.g12 = harmonics(m["g12"], "system.metric.g12");
            if (m.contains("g22")) g.g22 = harmonics(m["g22"], "system.metric.g22");
        }
        base = MechanicalSystem(g);
    }
    std::vector<PotentialPtr> terms = base.potentials();
    if (spec.contains("potentials")) {
        const auto& ps = spec["potentials"];
        if (!ps.is_array()) fail("system.potentials: expected an array");
        for (std::size_t i = 0; i < ps.size(); ++i)
            terms.push_back(potential_term(ps[i], "system.potentials[" + std::to_string(i) + "]"));
    }
    MechanicalSystem sys(base.metric(), terms);
    // positive definite metric on a sample grid
    for (int i = 0; i < 24; ++i)
        for (int j = 0; j < 24; ++j) {
            const Mat2 G = sys.metric_inverse(kTwoPi * i / 24, kTwoPi * j / 24);
            if (!(G(0, 0) > 0 && G.determinant() > 0)) fail("system.metric: inverse metric not positive definite");
        }
    return sys;
}

}  // namespace

MechanicalSystem build_system(const Json& spec) {
    try {
        return build_system_unchecked(spec);
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidInputError& e) {
        fail(std::string("system: ") + e.what());
    }
}

ExperimentConfig parse_config(const Json& doc, const std::string& task) {
    check_keys(doc, {"task", "system", "energy", "seed", "jobs", "output", "tolerances", "params"}, "config");
    ExperimentConfig cfg;
    cfg.task = task;
    if (doc.contains("task")) {
        if (!doc["task"].is_string()) fail("config.task: expected a string");
        if (doc["task"].get<std::string>() != task)
            fail("config.task '" + doc["task"].get<std::string>() + "' does not match subcommand '" + task + "'");
    }
    if (std::find(task_names().begin(), task_names().end(), task) == task_names().end())
        fail("unknown task '" + task + "'");
    if (!doc.contains("system")) fail("config: missing 'system'");
    if (!doc.contains("energy")) fail("config: missing 'energy'");
    cfg.system = doc["system"];
    build_system(cfg.system);  // validate now
    cfg.energy = number(doc["energy"], "config.energy");
    if (doc.contains("seed")) {
        if (!doc["seed"].is_number_integer() || doc["seed"].get<std::int64_t>() < 0) fail("config.seed: expected a non-negative integer");
        cfg.seed = doc["seed"].get<std::uint64_t>();
    }
    if (doc.contains("jobs")) {
        if (!doc["jobs"].is_number_integer() || doc["jobs"].get<std::int64_t>() < 0) fail("config.jobs: expected a non-negative integer");
        cfg.jobs = doc["jobs"].get<unsigned>();
    }
    if (doc.contains("output")) {
        if (!doc["output"].is_string()) fail("config.output: expected a string");
        cfg.output = doc["output"].get<std::string>();
    }
    if (doc.contains("tolerances")) {
        const auto& t = doc["tolerances"];
        if (!t.is_object()) fail("config.tolerances: expected an object");
        for (const auto& [key, v] : t.items()) cfg.tol.set(key, number(v, "config.tolerances." + key));
    }
    cfg.params = default_params(task);
    if (doc.contains("params")) {
        const auto& p = doc["params"];
        if (!p.is_object()) fail("config.params: expected an object");
        for (const auto& [key, v] : p.items()) {
            if (!cfg.params.contains(key)) fail("config.params: unknown key '" + key + "' for task " + task);
            const Json& def = cfg.params[key];
            const bool optional_string = def.is_string() && def.get<std::string>().empty();
            if (!same_type(v, def) && !(optional_string && (v.is_boolean() || v.is_string())))
                fail("config.params." + key + ": wrong type");
            cfg.params[key] = v;
        }
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& task) {
    std::ifstream in(path);
    if (!in) fail("cannot open config " + path.string());
    Json doc;
    try {
        doc = Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        fail("config " + path.string() + ": " + e.what());
    }
    return parse_config(doc, task);
}

void apply_tolerance_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail("--tol-override expects KEY=VALUE, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), val = assignment.substr(eq + 1);
    double x = 0.0;
    try {
        std::size_t used = 0;
        x = std::stod(val, &used);
        if (used != val.size()) throw std::invalid_argument(val);
    } catch (const std::exception&) {
        fail("--tol-override " + key + ": '" + val + "' is not a number");
    }
    cfg.tol.set(key, x);
}

}  // namespace torusdyn::runner
