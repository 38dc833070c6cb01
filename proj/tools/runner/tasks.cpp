#include "tasks.hpp"

#include <chrono>
#include <cmath>
#include <random>

#include "torusdyn/parallel.hpp"

namespace torusdyn::runner {

namespace {

template <int N>
Eigen::Matrix<double, N, 1> vec_param(const Json& v, const std::string& where) {
    if (!v.is_array() || v.size() != std::size_t(N))
        throw ConfigError(where + ": expected an array of " + std::to_string(N) + " numbers");
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
        if (!v[i].is_number()) throw ConfigError(where + ": expected numbers");
        out(i) = v[i].get<double>();
    }
    return out;
}

std::vector<double> list_param(const Json& v, const std::string& where) {
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ConfigError(where + ": expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

Json mat_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json r = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

Json vec_json(const Eigen::VectorXd& v) {
    Json r = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) r.push_back(v(i));
    return r;
}

Json complex_json(std::complex<double> z) { return Json::array({z.real(), z.imag()}); }

struct Context {
    const ExperimentConfig& cfg;
    MechanicalSystem sys;
    RunReport& rep;
    const Tolerances& tol;

    double t(const std::string& name) const { return tol[name]; }
    const Json& p(const std::string& key) const { return cfg.params.at(key); }
    double num(const std::string& key) const { return p(key).get<double>(); }
    int integer(const std::string& key) const {
        const Json& v = p(key);
        if (!v.is_number_integer()) throw ConfigError("params." + key + ": expected an integer");
        return v.get<int>();
    }
};

PeriodicOrbit find_orbit(const Context& c, const Json& spec, int m_max, const std::string& where) {
    if (!spec.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : spec.items())
        if (key != "guess" && key != "guess_period") throw ConfigError(where + ": unknown key '" + key + "'");
    if (!spec.contains("guess") || !spec.contains("guess_period"))
        throw ConfigError(where + ": needs 'guess' and 'guess_period'");
    const Vec4 guess = vec_param<4>(spec["guess"], where + ".guess");
    if (!spec["guess_period"].is_number()) throw ConfigError(where + ".guess_period: expected a number");
    return find_periodic_orbit(c.sys, c.cfg.energy, guess, spec["guess_period"].get<double>(), c.tol.orbit(m_max));
}

PeriodicOrbit find_orbit(const Context& c, int m_max) {
    return find_orbit(c, Json{{"guess", c.p("guess")}, {"guess_period", c.p("guess_period")}}, m_max, "params");
}

// Per-orbit invariants shared by every task that finds orbits.
void audit_orbit(Context& c, const PeriodicOrbit& o, const std::string& label) {
    auto& a = c.rep.audit;
    a.check(label + ": closure |psi_T(theta0) - theta0|", o.residual, "<=", c.t("closure_tol"), "closure_tol");
    a.check(label + ": |H(theta0) - k|", std::abs(c.sys.hamiltonian(o.theta0) - o.energy), "<=", c.t("level_tol"),
            "level_tol");
    a.check(label + ": |det dP - 1|", std::abs(o.dP.determinant() - 1.0), "<=", c.t("det_tol"), "det_tol");
    a.check(label + ": symplectic defect of the monodromy (relative)",
            symplectic_defect(o.monodromy) / std::max(1.0, o.monodromy.cwiseAbs().maxCoeff()), "<=", c.t("tol_symp"),
            "tol_symp");
    for (int m = 1; m <= 3; ++m)
        a.check(label + ": charpoly factorization residual m=" + std::to_string(m),
                charpoly_factorization_residual(o, m), "<=", c.t("charpoly_tol"), "charpoly_tol");
    int disagree = 0;
    for (const auto& v : o.verdicts) disagree += !v.agree();
    a.check(label + ": verdict disagreements (eigenvalue test vs multiplicity of 1)", disagree, "==", 0);
    const auto fi = frame_invariants(c.sys, o);
    a.check(label + ": frame generators u1 = X, u1s = -Y/|Y|^2", fi.generators, "<=", c.t("frame_tol"), "frame_tol");
    a.check(label + ": frame Gram matrix against J", fi.gram, "<=", c.t("gram_tol"), "gram_tol");
    a.check(label + ": level tangency of u2, u2s", fi.tangency, "<=", c.t("tangent_tol"), "tangent_tol");
    a.check(label + ": monodromy fixes u1 and shears u1s", fi.monodromy, "<=", c.t("frame_tol"), "frame_tol");
    if (o.stability == Stability::Hyperbolic) {
        const auto ev = eigenvalues2(o.dP);
        a.check(label + ": |lambda_u lambda_s - 1|", std::abs((ev[0] * ev[1]).real() - 1.0), "<=",
                c.t("reciprocity_tol"), "reciprocity_tol");
    }
}

// |f| and |grad f| along the orbit over [t_lo, t_hi].
std::pair<double, double> jet_on_orbit(const Context& c, const PeriodicOrbit& o, const PotentialTerm& f, double t_lo,
                                       double t_hi, int samples = 41) {
    const auto traj = integrate_flow(c.sys, o.theta0, t_hi, c.tol.integrator());
    double v = 0.0, g = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double tt = t_lo + (t_hi - t_lo) * i / (samples - 1);
        const Vec4 z = traj.at(tt);
        const Jet2 j = f.jet(z(0), z(1));
        v = std::max(v, std::abs(j.value()));
        g = std::max(g, j.gradient().norm());
    }
    return {v, g};
}

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = double(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (syy == 0) return 1.0;
    return sxy * sxy / (sxx * syy);
}

// ---- tasks ----

void regularity_scan(Context& c) {
    auto& a = c.rep.audit;
    const auto reg = regular_level_check(c.sys, c.cfg.energy, c.integer("grid_density"), c.t("tol_reg"));
    c.rep.results["regularity"] = {{"is_regular", reg.is_regular},
                                   {"level_empty", reg.level_empty},
                                   {"min_gradient_norm", reg.min_gradient_norm},
                                   {"critical_values", reg.critical_values},
                                   {"suggested_delta", reg.suggested_delta ? Json(*reg.suggested_delta) : Json()}};
    Table crit({"critical_value"});
    for (double v : reg.critical_values) crit.add(std::vector<double>{v});
    c.rep.tables["critical_values"] = crit;
    if (c.p("expect_regular").is_boolean())
        a.expect("level regularity matches the expectation", reg.is_regular == c.p("expect_regular").get<bool>());

    std::mt19937_64 rng(c.cfg.seed);
    std::uniform_real_distribution<double> ux(0.0, kTwoPi), up(-2.0, 2.0);
    auto random_point = [&] {
        const double x1 = ux(rng), x2 = ux(rng), p1 = up(rng), p2 = up(rng);
        return Vec4(x1, x2, p1, p2);
    };
    double w_omega = 0.0, w_field = 0.0;
    for (int i = 0; i < c.integer("random_points"); ++i) {
        const Vec4 z = random_point();
        const Vec4 X = hamiltonian_field(c.sys, z), Y = normal_field(c.sys, z);
        w_omega = std::max(w_omega, std::abs(omega(Y, X) - Y.squaredNorm()) / std::max(1.0, Y.squaredNorm()));
        w_field = std::max(w_field, (X - standard_J() * Y).norm() / std::max(1.0, Y.norm()));
    }
    a.check("omega(Y, X) = |grad H|^2 at random points (relative)", w_omega, "<=", c.t("omega_tol"), "omega_tol");
    a.check("X = J Y at random points (relative)", w_field, "<=", c.t("omega_tol"), "omega_tol");

    double w_germ = 0.0;
    int non_monotone = 0;
    for (int i = 0; i < c.integer("germ_points"); ++i) {
        const Vec4 z = random_point();
        if (c.sys.gradient(z).norm() < 1e-3) continue;
        const auto g = normal_germ(c.sys, z, c.t("eps_normal"), 19, 1e-3, c.tol.integrator());
        w_germ = std::max(w_germ, std::abs(g.slope - g.expected) / std::max(1.0, g.expected));
        non_monotone += !g.monotone;
    }
    a.check("e'(0) = |grad H|^2 of the normal-flow germ (relative)", w_germ, "<=", c.t("germ_tol"), "germ_tol");
    a.check("non-monotone normal-flow germs", non_monotone, "==", 0);

    double w_grad = 0.0, w_hess = 0.0;
    for (int i = 0; i < 20; ++i) {
        const Vec4 z = random_point();
        const auto d = c.sys.derivatives(z, 2);
        const double h = 1e-5;
        for (int k = 0; k < 4; ++k) {
            const Vec4 e = h * Vec4::Unit(k);
            const double fd = (c.sys.hamiltonian(z + e) - c.sys.hamiltonian(z - e)) / (2 * h);
            w_grad = std::max(w_grad, std::abs(fd - d.grad(k)) / std::max(1.0, std::abs(d.grad(k))));
            const Vec4 fh = (c.sys.gradient(z + e) - c.sys.gradient(z - e)) / (2 * h);
            w_hess = std::max(w_hess, (fh - d.hess.col(k)).cwiseAbs().maxCoeff() / std::max(1.0, d.hess.col(k).norm()));
        }
    }
    a.check("gradient against central differences (relative)", w_grad, "<=", c.t("derivative_tol"), "derivative_tol");
    a.check("Hessian against central differences (relative)", w_hess, "<=", c.t("derivative_tol"), "derivative_tol");
    c.rep.results["identities"] = {{"omega_defect", w_omega}, {"field_defect", w_field},
                                   {"germ_defect", w_germ},   {"gradient_fd_defect", w_grad},
                                   {"hessian_fd_defect", w_hess}};
}

void orbit_table_row(Table& t, int idx, const PeriodicOrbit& o) {
    const auto ev = eigenvalues2(o.dP);
    bool all = true;
    for (const auto& v : o.verdicts) all = all && v.nondegenerate;
    t.add({std::to_string(idx), format_number(o.theta0(0)), format_number(o.theta0(1)), format_number(o.theta0(2)),
           format_number(o.theta0(3)), format_number(o.period), to_string(o.stability), format_number(ev[0].real()),
           format_number(ev[0].imag()), format_number(ev[1].real()), format_number(ev[1].imag()),
           format_number(o.residual), all ? "1" : "0"});
}

Table orbit_table() {
    return Table({"index", "x1", "x2", "p1", "p2", "T_min", "stability", "re_1", "im_1", "re_2", "im_2", "residual",
                  "nondegenerate_all"});
}

void orbit_scan(Context& c) {
    auto& a = c.rep.audit;
    const int m_max = c.integer("m_max");
    const auto scan = scan_short_orbits(c.sys, c.cfg.energy, c.num("T_max"), c.integer("grid_density"),
                                        c.tol.orbit(m_max), c.cfg.jobs, c.t("dedup_radius"));
    Json orbits = Json::array();
    Table t = orbit_table();
    for (std::size_t i = 0; i < scan.orbits.size(); ++i) {
        orbits.push_back(orbit_json(scan.orbits[i]));
        orbit_table_row(t, int(i), scan.orbits[i]);
        audit_orbit(c, scan.orbits[i], "orbit " + std::to_string(i));
    }
    c.rep.tables["orbits"] = t;
    c.rep.results["seeds"] = scan.seeds;
    c.rep.results["newton_attempts"] = scan.newton_attempts;
    c.rep.results["min_period_estimate"] = scan.min_period ? Json(*scan.min_period) : Json();
    c.rep.results["min_period_note"] = "empirical minimum over found orbits; a lower-bound estimate, not a certificate";
    c.rep.results["orbits"] = orbits;

    const auto& expect = c.p("expect");
    for (std::size_t e = 0; e < expect.size(); ++e) {
        const auto& ex = expect[e];
        const std::string where = "params.expect[" + std::to_string(e) + "]";
        if (!ex.is_object()) throw ConfigError(where + ": expected an object");
        for (const auto& [key, _] : ex.items())
            if (key != "theta0" && key != "multipliers" && key != "stability")
                throw ConfigError(where + ": unknown key '" + key + "'");
        const Vec4 th = vec_param<4>(ex.at("theta0"), where + ".theta0");
        const PeriodicOrbit* match = nullptr;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& o : scan.orbits) {
            PeriodicOrbit probe;
            probe.theta0 = th;
            probe.period = o.period;
            const double d = orbit_distance(c.sys, probe, o, 600, c.tol.integrator());
            if (d < best) {
                best = d;
                match = &o;
            }
        }
        const std::string label = "expected orbit " + std::to_string(e);
        if (!a.check(label + ": distance to the nearest found orbit", best, "<=", c.t("dedup_radius"), "dedup_radius"))
            continue;
        if (ex.contains("multipliers")) {
            const Vec2 want = vec_param<2>(ex["multipliers"], where + ".multipliers");
            const auto ev = eigenvalues2(match->dP);
            std::array<double, 2> got{std::abs(ev[0]), std::abs(ev[1])};
            std::array<double, 2> exp{std::abs(want(0)), std::abs(want(1))};
            std::sort(got.begin(), got.end());
            std::sort(exp.begin(), exp.end());
            for (int i = 0; i < 2; ++i)
                a.check(label + ": multiplier " + std::to_string(i) + " relative error",
                        std::abs(got[i] - exp[i]) / exp[i], "<=", c.t("multiplier_rel_tol"), "multiplier_rel_tol");
        }
        if (ex.contains("stability")) {
            if (!ex["stability"].is_string()) throw ConfigError(where + ".stability: expected a string");
            a.expect(label + ": stability " + ex["stability"].get<std::string>(),
                     to_string(match->stability) == ex["stability"].get<std::string>());
        }
    }
}

void classify(Context& c) {
    auto& a = c.rep.audit;
    const int m_max = c.integer("m_max");
    const auto o = find_orbit(c, m_max);
    audit_orbit(c, o, "orbit");
    c.rep.results["orbit"] = orbit_json(o);
    c.rep.results["minimal_period"] = minimal_period(c.sys, o, c.tol.orbit(m_max));
    Table vt({"order", "nondegenerate", "margin", "cross_check_nondegenerate", "cross_check_margin", "root_index"});
    int nondeg = 0;
    for (const auto& v : o.verdicts) {
        vt.add({std::to_string(v.order), v.nondegenerate ? "1" : "0", format_number(v.margin),
                v.cross_check_nondegenerate ? "1" : "0", format_number(v.cross_check_margin),
                std::to_string(v.root_index)});
        nondeg += v.nondegenerate;
    }
    c.rep.tables["verdicts"] = vt;
    if (const auto& s = c.p("expect_stability"); s.is_string() && !s.get<std::string>().empty())
        a.expect("stability is " + s.get<std::string>(), to_string(o.stability) == s.get<std::string>());
    if (const auto& e = c.p("expect_nondegenerate"); e.is_boolean())
        a.check(std::string("orders classified ") + (e.get<bool>() ? "nondegenerate" : "degenerate"),
                e.get<bool>() ? nondeg : int(o.verdicts.size()) - nondeg, "==", double(o.verdicts.size()));

    const auto tw = twist_times(c.sys, o.theta0, Vec4::Unit(2), Vec4::Unit(3), c.num("twist_horizon"),
                                c.tol.integrator(), c.num("twist_step"));
    Table tt({"time"});
    for (double r : tw.roots) tt.add(std::vector<double>{r});
    c.rep.tables["twist_roots"] = tt;
    Json flagged = Json::array();
    for (const auto& [lo, hi] : tw.flagged_intervals) flagged.push_back({lo, hi});
    c.rep.results["twist"] = {{"plane", "vertical"}, {"horizon", c.num("twist_horizon")}, {"roots", tw.roots},
                              {"non_discrete", tw.non_discrete}, {"flagged_intervals", flagged}};
    a.expect("vertical plane meets the vertical subspace at isolated times", !tw.non_discrete);
}

void perturb_nondegeneracy(Context& c) {
    auto& a = c.rep.audit;
    const int m = c.integer("m");
    const auto o = find_orbit(c, std::max(12, 2 * m));
    audit_orbit(c, o, "orbit");
    c.rep.results["orbit"] = orbit_json(o);
    PerturbOptions po;
    po.orbit = c.tol.orbit(std::max(12, 2 * m));
    po.eps_delta = c.t("eps_delta_factor") * o.period;
    po.tube_radius = c.num("tube_radius");
    po.margin = c.t("repair_margin");
    const double budget = c.num("budget");
    NondegeneracyRepair rep;
    try {
        rep = perturb_to_nondegenerate(c.sys, o, m, budget, po, c.cfg.jobs);
    } catch (const BudgetError& e) {
        c.rep.results["repair"] = {{"error", e.what()}, {"best_margin", e.best_margin}};
        a.check("best |lambda^m - 1| within the budget", e.best_margin, ">", c.t("repair_margin"), "repair_margin");
        return;
    }
    Json verdicts = Json::array();
    Table vt({"order", "margin"});
    for (int k = 1; k <= 2 * m; ++k) {
        const double mg = min_root_margin(rep.orbit.dP, k) ;
        vt.add(std::vector<double>{double(k), mg});
        a.check("|lambda^m - 1| after repair, m=" + std::to_string(k), mg, ">", c.t("repair_margin"), "repair_margin");
    }
    c.rep.tables["repaired_margins"] = vt;
    c.rep.results["repair"] = {{"perturbed", bool(rep.potential)},
                               {"coefficients", {rep.a, rep.b, rep.c}},
                               {"t1", rep.t1},
                               {"eps_delta", rep.eps_delta},
                               {"budget", budget},
                               {"candidates_tried", rep.candidates_tried},
                               {"min_margin", rep.min_margin},
                               {"orbit", orbit_json(rep.orbit)}};
    a.check("max |a|, |b|, |c| within the budget", std::max({std::abs(rep.a), std::abs(rep.b), std::abs(rep.c)}), "<=",
            budget);
    a.check("orbit persists under H + f0 (closure)", rep.orbit.residual, "<=", c.t("persistence_tol"),
            "persistence_tol");
    if (rep.potential) {
        const auto [lo, hi] = rep.potential->time_support();
        const auto [v, g] = jet_on_orbit(c, o, *rep.potential, std::max(0.0, lo), hi);
        const double scale = std::max({std::abs(rep.a), std::abs(rep.b), std::abs(rep.c)});
        a.check("|f0| on the orbit", v, "<=", c.t("jet_value_tol"), "jet_value_tol");
        a.check("|grad f0| on the orbit / coefficient scale", g / scale, "<=", c.t("jet_gradient_tol"),
                "jet_gradient_tol");
        const PeriodicOrbit& po2 = rep.orbit;
        int disagree = 0;
        for (const auto& v2 : po2.verdicts) disagree += !v2.agree();
        a.check("repaired orbit verdict disagreements", disagree, "==", 0);
    }
}

void b_surjectivity(Context& c) {
    auto& a = c.rep.audit;
    const auto o = find_orbit(c, 12);
    audit_orbit(c, o, "orbit");
    c.rep.results["orbit"] = orbit_json(o);
    const double t0 = c.num("t0_fraction") * o.period;
    const auto factors = list_param(c.p("eps_factors"), "params.eps_factors");
    if (factors.empty()) throw ConfigError("params.eps_factors: empty");
    const double base = c.t("eps_delta_factor") * o.period;
    std::vector<ComplementStudy> st(factors.size());
    parallel_for(factors.size(), c.cfg.jobs, [&](std::size_t i) {
        st[i] = complement_study(c.sys, o, t0, factors[i] * base, c.num("tube_radius"), c.tol.integrator(),
                                 c.t("complement_rank_tol"));
    });
    Table conv({"eps_delta", "limit_error_alpha", "limit_error_beta"});
    Json runs = Json::array();
    for (std::size_t i = 0; i < st.size(); ++i) {
        const auto& s = st[i];
        conv.add(std::vector<double>{s.eps_delta, s.limit_error_alpha, s.limit_error_beta});
        runs.push_back({{"eps_delta", s.eps_delta},
                        {"B_alpha", vec_json(s.B_alpha)},
                        {"B_beta", vec_json(s.B_beta)},
                        {"limit_alpha", vec_json(s.limit_alpha)},
                        {"limit_beta", vec_json(s.limit_beta)},
                        {"tangency", s.tangency},
                        {"complement_gram", mat_json(s.gram)},
                        {"complement_rank", s.gram_rank},
                        {"flow_residual", s.flow_residual},
                        {"limit_error_alpha", s.limit_error_alpha},
                        {"limit_error_beta", s.limit_error_beta}});
        const std::string tag = " (eps_delta=" + format_number(s.eps_delta) + ")";
        a.check("|dH . B| / |B|" + tag, s.tangency, "<=", c.t("tangency_tol"), "tangency_tol");
        a.check("rank of the complement Gram matrix" + tag, s.gram_rank, "==", 2);
        a.check("X^H not in span B(h)" + tag, s.flow_residual, ">", c.t("flow_residual_min"), "flow_residual_min");
    }
    c.rep.tables["plot_eps_convergence"] = conv;
    // observed order between consecutive widths, above the integration floor
    const double floor = 100 * c.t("integrator_tol");
    Json orders = Json::array();
    for (std::size_t i = 0; i + 1 < st.size(); ++i)
        for (int which = 0; which < 2; ++which) {
            const double e0 = which ? st[i].limit_error_beta : st[i].limit_error_alpha;
            const double e1 = which ? st[i + 1].limit_error_beta : st[i + 1].limit_error_alpha;
            if (e0 <= floor) continue;
            const double order = std::log(e0 / e1) / std::log(st[i].eps_delta / st[i + 1].eps_delta);
            orders.push_back({{"generator", which ? "beta" : "alpha"}, {"from", st[i].eps_delta},
                              {"to", st[i + 1].eps_delta}, {"order", order}});
            a.check(std::string("observed convergence order, ") + (which ? "beta" : "alpha") + " generator",
                    order, ">=", c.t("convergence_order_min"), "convergence_order_min");
        }
    c.rep.results["t0"] = t0;
    c.rep.results["runs"] = runs;
    c.rep.results["convergence_orders"] = orders;

    // chart identities and the mollifier mass at the base width
    const auto chart = make_orbit_chart(c.sys, o, t0, base, c.num("tube_radius"), c.tol.integrator());
    const auto h = build_h_alpha_beta(chart, {1.0}, {1.0}, base);
    double hv = 0.0, hd = 0.0;
    for (int i = 0; i <= 40; ++i) {
        const double tt = t0 - base + 2 * base * i / 40;
        const Vec2 x = chart->base(tt);
        const Jet2 j = h->jet(x(0), x(1));
        hv = std::max(hv, std::abs(j.value()));
        hd = std::max(hd, std::abs(j.gradient().dot(chart->velocity(tt))) / std::max(1.0, j.gradient().norm()));
    }
    a.check("h on the base curve", hv, "<=", c.t("jet_value_tol"), "jet_value_tol");
    a.check("dh . H_p on the base curve", hd, "<=", c.t("chart_tol"), "chart_tol");
    const double mass = MollifiedDelta(t0, base, 0).integrate([](double) { return 1.0; });
    a.check("mollified delta mass - 1", std::abs(mass - 1.0), "<=", c.t("delta_moment_tol"), "delta_moment_tol");
}

void piz_check(Context& c) {
    auto& a = c.rep.audit;
    const auto o = find_orbit(c, 12);
    audit_orbit(c, o, "orbit");
    c.rep.results["orbit"] = orbit_json(o);
    const double t1 = c.num("t1_fraction") * o.period;
    const double eps = c.t("eps_delta_factor") * o.period;
    const auto chart = make_orbit_chart(c.sys, o, t1, eps, c.num("tube_radius"), c.tol.integrator());
    const auto frame = adapted_frame(c.sys, *chart, t1);
    c.rep.results["t1"] = t1;
    c.rep.results["eps_delta"] = eps;

    Json zs = Json::array();
    const bool symbolic = c.p("expect_symbolic").get<bool>();
    for (std::size_t i = 0; i < c.p("coefficients").size(); ++i) {
        const Vec3 abc = vec_param<3>(c.p("coefficients")[i], "params.coefficients");
        const Mat2 z = pi_of_Z(frame, abc(0), abc(1), abc(2));
        const Mat2 zc = pi_of_Z_commutator(frame, abc(0), abc(1), abc(2));
        const std::string tag = " (a,b,c)=(" + format_number(abc(0)) + "," + format_number(abc(1)) + "," +
                                format_number(abc(2)) + ")";
        a.check("|tr pi(Z)|" + tag, std::abs(z.trace()), "<=", c.t("trace_tol"), "trace_tol");
        a.check("pi(Z) against the commutator reduction" + tag, (z - zc).cwiseAbs().maxCoeff(), "<=",
                c.t("commutator_tol"), "commutator_tol");
        Json rec = {{"coefficients", vec_json(abc)}, {"pi_Z", mat_json(z)}, {"pi_Z_commutator", mat_json(zc)}};
        if (symbolic) {
            Mat2 s;
            s << -abc(1), 2 * abc(2), -abc(0), abc(1);
            rec["symbolic"] = mat_json(s);
            a.check("pi(Z) against [[-b, 2c], [-a, b]]" + tag, (z - s).cwiseAbs().maxCoeff(), "<=",
                    c.t("symbolic_tol"), "symbolic_tol");
        }
        zs.push_back(std::move(rec));
    }
    c.rep.results["pi_Z"] = zs;

    const auto rk = dS_rank(frame, c.t("rank_rel_tol"));
    c.rep.results["dS"] = {{"matrix", mat_json(rk.matrix)}, {"rank", rk.rank},
                           {"singular_values", vec_json(rk.singular_values)}};
    a.check("rank of dS", rk.rank, "==", 3);
    a.check("smallest singular value of dS", rk.singular_values(2), ">", c.t("rank_sv_min"), "rank_sv_min");

    // first-order monodromy change against the prediction
    const Vec3 dir = vec_param<3>(c.p("fd_direction"), "params.fd_direction");
    const auto f0 = build_abc_potential(chart, t1, dir(0), dir(1), dir(2), eps);
    OrbitOptions oo = c.tol.orbit(12);
    oo.integ = resolve_support(oo.integ, *f0);
    const double l = c.num("fd_step");
    const std::array<double, 2> amps{l, -l};
    std::array<PeriodicOrbit, 2> pm;
    parallel_for(2, c.cfg.jobs, [&](std::size_t i) {
        pm[i] = complete_orbit(c.sys.with_potential(std::make_shared<ScaledPotential>(f0, amps[i])), o.theta0,
                               o.period, oo);
    });
    const Mat2 measured = (pm[0].dP - pm[1].dP) / (2 * l);
    const Mat2 predicted =
        project_derivative(o, predicted_monodromy_derivative(c.sys, o, frame, dir(0), dir(1), dir(2), oo.integ));
    const double rel = (measured - predicted).norm() / predicted.norm();
    const double allowed = std::max(c.t("piZ_floor"), c.t("piZ_slope") * eps);
    c.rep.results["first_order"] = {{"direction", vec_json(dir)}, {"step", l}, {"measured", mat_json(measured)},
                                    {"predicted", mat_json(predicted)}, {"relative_error", rel},
                                    {"allowed", allowed}};
    a.check("finite-difference d pi(monodromy) against the prediction (relative)", rel, "<=", allowed,
            "piZ_floor");
    for (int i = 0; i < 2; ++i)
        a.check("orbit persists under H +- l f0", pm[i].residual, "<=", c.t("persistence_tol"), "persistence_tol");
    const auto [v, g] = jet_on_orbit(c, o, *f0, std::max(0.0, t1 - eps), t1 + eps);
    a.check("|f0| on the orbit", v, "<=", c.t("jet_value_tol"), "jet_value_tol");
    a.check("|grad f0| on the orbit / coefficient scale", g / dir.cwiseAbs().maxCoeff(), "<=",
            c.t("jet_gradient_tol"), "jet_gradient_tol");

    // eigenvalue locus of dP along a coefficient ray
    const Vec3 sdir = vec_param<3>(c.p("sweep_direction"), "params.sweep_direction");
    const auto amps_sweep = list_param(c.p("sweep_amplitudes"), "params.sweep_amplitudes");
    const auto fs = build_abc_potential(chart, t1, sdir(0), sdir(1), sdir(2), eps);
    OrbitOptions os = c.tol.orbit(12);
    os.integ = resolve_support(os.integ, *fs);
    std::vector<PeriodicOrbit> sweep(amps_sweep.size());
    parallel_for(amps_sweep.size(), c.cfg.jobs, [&](std::size_t i) {
        sweep[i] = complete_orbit(c.sys.with_potential(std::make_shared<ScaledPotential>(fs, amps_sweep[i])),
                                  o.theta0, o.period, os);
    });
    Table locus({"amplitude", "re_1", "im_1", "re_2", "im_2", "abs_1", "abs_2"});
    double worst = 0.0;
    for (std::size_t i = 0; i < sweep.size(); ++i) {
        const auto ev = eigenvalues2(sweep[i].dP);
        locus.add(std::vector<double>{amps_sweep[i], ev[0].real(), ev[0].imag(), ev[1].real(), ev[1].imag(),
                                      std::abs(ev[0]), std::abs(ev[1])});
        worst = std::max(worst, sweep[i].residual);
    }
    c.rep.tables["plot_eigen_locus"] = locus;
    if (!sweep.empty())
        a.check("orbit persists along the coefficient sweep", worst, "<=", c.t("persistence_tol"), "persistence_tol");
}

void manifold_splitting(Context& c) {
    auto& a = c.rep.audit;
    const auto o1 = find_orbit(c, c.p("orbit1"), 12, "params.orbit1");
    const auto o2 = c.p("orbit2").empty() ? o1 : find_orbit(c, c.p("orbit2"), 12, "params.orbit2");
    audit_orbit(c, o1, "orbit 1");
    if (!c.p("orbit2").empty()) audit_orbit(c, o2, "orbit 2");
    c.rep.results["orbit1"] = orbit_json(o1);
    c.rep.results["orbit2"] = orbit_json(o2);

    SplitSpec base;
    base.center = vec_param<2>(c.p("center"), "params.center");
    base.inner = c.num("inner");
    base.outer = c.num("outer");
    base.bump_radius_factor = c.num("bump_radius_factor");
    base.unstable_radius = c.num("unstable_radius");
    base.stable_radius = c.num("stable_radius");
    base.unstable_sign = c.integer("unstable_sign");
    base.stable_sign = c.integer("stable_sign");
    base.tol_angle = c.t("tol_angle");
    base.contact_tol = c.t("contact_tol");
    base.blend_tol = c.t("blend_tol");
    const std::string graph = c.p("graph").get<std::string>();
    if (graph == "pendulum-separatrix") {
        const double p2 = o2.theta0(3), s = -double(base.unstable_sign);
        base.unstable_graph = [p2, s](const Jet2& x1, const Jet2&) {
            return std::array<Jet2, 2>{s * 2.0 * cos(x1 * 0.5), Jet2(p2)};
        };
    } else if (graph != "fit") {
        throw ConfigError("params.graph: expected 'fit' or 'pendulum-separatrix'");
    }
    GrowOptions grow;
    grow.tol = c.t("manifold_seed_tol");
    grow.jobs = 1;
    OrbitOptions oo = c.tol.orbit(12);

    const auto tilts = list_param(c.p("tilts"), "params.tilts");
    std::vector<SplitResult> res(tilts.size());
    parallel_for(tilts.size(), c.cfg.jobs, [&](std::size_t i) {
        SplitSpec sp = base;
        sp.tilt = tilts[i];
        res[i] = split_manifolds(c.sys, o1, o2, c.cfg.energy, c.num("section_x2"), sp, grow, oo);
    });

    Table curve({"tilt", "angle_before", "angle_after"});
    Table detail({"tilt", "angle_before", "angle_after", "records_after", "transversal_after", "closure_1",
                  "closure_2", "period_change_1", "period_change_2", "graph_fit_residual"});
    Json runs = Json::array();
    std::vector<double> xs, ys;
    const bool tangential = c.p("expect_tangential").get<bool>();
    const double ttilt = c.num("transversal_tilt");
    for (std::size_t i = 0; i < res.size(); ++i) {
        const auto& r = res[i];
        int transversal = 0;
        Json recs = Json::array();
        for (const auto& h : r.after) {
            transversal += h.transversal;
            recs.push_back({{"point", vec_json(h.point)}, {"angle", h.angle}, {"gap", h.gap}, {"shift", h.shift},
                            {"refined", h.refined}, {"transversal", h.transversal}});
        }
        curve.add(std::vector<double>{tilts[i], r.max_angle_before, r.max_angle_after});
        detail.add(std::vector<double>{tilts[i], r.max_angle_before, r.max_angle_after, double(r.after.size()),
                                       double(transversal), r.closure_1, r.closure_2, r.period_change_1,
                                       r.period_change_2, r.graph_fit_residual});
        runs.push_back({{"tilt", tilts[i]},
                        {"perturbation", {{"kind", r.potential->kind()},
                                          {"center", vec_json(base.center)},
                                          {"inner", base.inner},
                                          {"outer", base.outer},
                                          {"bump_radius", base.bump_radius_factor * base.outer},
                                          {"graph", graph}}},
                        {"max_angle_before", r.max_angle_before},
                        {"max_angle_after", r.max_angle_after},
                        {"records_before", r.before.size()},
                        {"records_after", recs},
                        {"closure", {r.closure_1, r.closure_2}},
                        {"period_change", {r.period_change_1, r.period_change_2}},
                        {"graph_fit_residual", r.graph_fit_residual}});
        const std::string tag = " (tilt=" + format_number(tilts[i]) + ")";
        if (tangential)
            a.check("unperturbed crossing angle" + tag, r.max_angle_before, "<=", c.t("tol_angle"), "tol_angle");
        for (int k = 0; k < 2; ++k) {
            a.check("orbit " + std::to_string(k + 1) + " closure under H + f" + tag, k ? r.closure_2 : r.closure_1,
                    "<=", c.t("persistence_tol"), "persistence_tol");
            a.check("orbit " + std::to_string(k + 1) + " period change" + tag,
                    k ? r.period_change_2 : r.period_change_1, "<=", c.t("persistence_tol"), "persistence_tol");
        }
        if (tilts[i] == 0) {
            a.check("zero tilt leaves the angle unchanged" + tag, std::abs(r.max_angle_after - r.max_angle_before),
                    "<=", c.t("tol_angle"), "tol_angle");
        } else {
            a.check("crossing angle after the tilt" + tag, r.max_angle_after, ">", c.t("tol_angle"), "tol_angle");
            xs.push_back(tilts[i]);
            ys.push_back(r.max_angle_after);
        }
        if (tilts[i] == ttilt) a.check("crossing angle exceeds the tilt" + tag, r.max_angle_after, ">", ttilt);
    }
    c.rep.tables["plot_angle_vs_tilt"] = curve;
    c.rep.tables["splitting"] = detail;
    c.rep.results["runs"] = runs;
    if (xs.size() >= 3) {
        const double r2 = r_squared(xs, ys);
        c.rep.results["angle_vs_tilt_r2"] = r2;
        a.check("angle against tilt is linear (R^2)", r2, ">", c.t("linearity_r2"), "linearity_r2");
    }
    bool monotone = true;
    for (std::size_t i = 1; i < ys.size(); ++i) monotone = monotone && ((ys[i] - ys[i - 1]) * (xs[i] - xs[i - 1]) > 0);
    if (ys.size() >= 2) a.expect("angle increases with the tilt", monotone);

    // branch checks on the unperturbed system
    if (!res.empty()) {
        IntegratorOptions integ = c.tol.integrator();
        integ.tol = std::min(integ.tol, 1e-12);
        const auto sec = std::make_shared<const Section>(c.sys, c.cfg.energy, c.num("section_x2"), integ);
        const auto map = section_map(sec);
        const auto& U = res[0].unstable_before;
        const auto& S = res[0].stable_before;
        a.check("unstable branch invariance defect", invariance_defect(U, map), "<=", c.t("invariance_tol"),
                "invariance_tol");
        a.check("stable branch invariance defect", invariance_defect(S, map), "<=", c.t("invariance_tol"),
                "invariance_tol");
        for (const auto* br : {&U, &S}) {
            const std::string side = to_string(br->side);
            if (br->params.back() >= 2.0) {
                const auto fd = fundamental_domain(*br, map, 1.0);
                a.check(side + " fundamental domain endpoint defect", fd.endpoint_defect, "<=",
                        c.t("invariance_tol"), "invariance_tol");
            }
            Table bt({"arclength", "x1", "p1", "param"});
            for (std::size_t i = 0; i < br->points.size(); ++i)
                bt.add(std::vector<double>{br->arclength[i], br->points[i](0), br->points[i](1), br->params[i]});
            c.rep.tables["branch_" + side] = bt;
        }
        for (const auto* orb : {&o1, &o2}) {
            const auto sp = hyperbolic_splitting(sec->derivative(sec->fixed_point(*orb)));
            a.check("section multipliers |lambda_u lambda_s - 1|", std::abs(sp.lambda_u * sp.lambda_s - 1.0), "<=",
                    c.t("reciprocity_tol"), "reciprocity_tol");
        }
        for (std::size_t i = 0; i < res.size(); ++i)
            if (tilts[i] == ttilt) {
                for (const auto* br : {&res[i].unstable_after, &res[i].stable_after}) {
                    Table bt({"arclength", "x1", "p1", "param"});
                    for (std::size_t j = 0; j < br->points.size(); ++j)
                        bt.add(std::vector<double>{br->arclength[j], br->points[j](0), br->points[j](1),
                                                   br->params[j]});
                    c.rep.tables["branch_" + to_string(br->side) + "_tilted"] = bt;
                }
            }
    }
}

}  // namespace

Json orbit_json(const PeriodicOrbit& o) {
    Json verdicts = Json::array();
    for (const auto& v : o.verdicts)
        verdicts.push_back({{"order", v.order},
                            {"nondegenerate", v.nondegenerate},
                            {"eigenvalue", complex_json(v.eigenvalue)},
                            {"root_index", v.root_index},
                            {"margin", v.margin},
                            {"cross_check_nondegenerate", v.cross_check_nondegenerate},
                            {"cross_check_margin", v.cross_check_margin}});
    const auto ev = eigenvalues2(o.dP);
    return {{"theta0", vec_json(o.theta0)},
            {"T_min", o.period},
            {"k", o.energy},
            {"monodromy", mat_json(o.monodromy)},
            {"dP", mat_json(o.dP)},
            {"multipliers", {complex_json(ev[0]), complex_json(ev[1])}},
            {"verdicts", verdicts},
            {"stability", to_string(o.stability)},
            {"residual", o.residual}};
}

RunReport run(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    RunReport rep;
    rep.config = cfg.echo();
    rep.tolerances = cfg.tol.to_json();
    rep.jobs = cfg.jobs;
    Context c{cfg, build_system(cfg.system), rep, cfg.tol};
    try {
        if (cfg.task == "regularity-scan") regularity_scan(c);
        else if (cfg.task == "orbit-scan") orbit_scan(c);
        else if (cfg.task == "classify") classify(c);
        else if (cfg.task == "perturb-nondegeneracy") perturb_nondegeneracy(c);
        else if (cfg.task == "B-surjectivity") b_surjectivity(c);
        else if (cfg.task == "piZ-check") piz_check(c);
        else if (cfg.task == "manifold-splitting") manifold_splitting(c);
        else throw ConfigError("unknown task '" + cfg.task + "'");
        rep.status = rep.audit.passed() ? "ok" : "check-failure";
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        rep.status = "numeric-failure";
        rep.error = e.what();
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

}  // namespace torusdyn::runner
