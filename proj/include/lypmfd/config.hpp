#pragma once

#include <json.hpp>
#include <fstream>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lypmfd/validation.hpp"

namespace lypmfd {

using nlohmann::json;

// Numeric knobs shared by the solver and the condition machinery; all
// overridable from the config's "numerics" section.
struct Numerics {
    double T_max = 0.0;  // 0 = derive from the rates: 40 / min(sigma_n - alpha_x, beta_z - sigma_p, 1)
    int n_steps = 4096;
    double tol = 1e-9;
    int max_iters = 200;
    double tail_tol = 1e-8;
    double rate_slack = 0.05;
    std::uint64_t seed = 12345;
    double h_fd = 1e-5;
    double T_ver = 50.0;
    int n_ver = 512;
    double eta = 0.05;
    int samples = 4096;
    bool a_priori_check = true;

    FixedPointConfig solver_config() const {
        FixedPointConfig cfg;
        cfg.tol = tol;
        cfg.max_iters = max_iters;
        cfg.a_priori_check = a_priori_check;
        cfg.rate_slack = rate_slack;
        cfg.tail_tol = tail_tol;
        return cfg;
    }
};

// Fully assembled problem: system, verified constants, sigma, gap report and
// the resolved time grid.
struct Problem {
    SystemSpec spec;
    TrichotomyConstants tc;
    SigmaParameters sigma;
    GapReport gap;
    Numerics num;
    TimeGrid grid;
    double box_halfwidth = 1.0;  // region on which the Lipschitz data is declared/estimated
    bool has_cutoff = false;
    CutoffSpec cutoff;

    LipschitzTriple deltas() const { return {spec.delta_x, spec.delta_y, spec.delta_z}; }
};

// Sampled estimate of the A5 constants: worst Jacobian difference quotient.
inline double estimate_deriv_lipschitz(const NonlinearMap& f, const Box& box, int pairs,
                                       std::uint64_t seed, double safety = 1.1) {
    if (f.out_dim() == 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int dim = static_cast<int>(box.lo.size());
    VectorXd u1(dim), u2(dim);
    double sup = 0.0;
    for (int p = 0; p < pairs; ++p) {
        for (int j = 0; j < dim; ++j) {
            u1(j) = box.lo(j) + unit(rng) * (box.hi(j) - box.lo(j));
            u2(j) = box.lo(j) + unit(rng) * (box.hi(j) - box.lo(j));
        }
        const double du = (u1 - u2).lpNorm<Eigen::Infinity>();
        if (du == 0.0) continue;
        const double dj =
            (f.jacobian(u1) - f.jacobian(u2)).cwiseAbs().rowwise().sum().maxCoeff();
        sup = std::max(sup, dj / du);
    }
    return safety * sup;
}

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                                const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("config." + where + ": unknown key '" + it.key() + "'");
    }
}

inline Eigen::MatrixXd read_matrix(const json& linear, const std::string& name, int n) {
    if (!linear.contains(name)) {
        if (n == 0) return Eigen::MatrixXd(0, 0);
        throw ConfigError("config.linear: missing matrix " + name);
    }
    const json& arr = linear.at(name);
    if (!arr.is_array()) throw ConfigError("config.linear." + name + ": expected a row-major array");
    if (static_cast<int>(arr.size()) != n * n)
        throw ConfigError("config.linear." + name + ": has " + std::to_string(arr.size()) +
                          " entries, expected " + std::to_string(n * n) + " (row-major " +
                          std::to_string(n) + "x" + std::to_string(n) + ")");
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const json& v = arr.at(i * n + j);
            if (!v.is_number())
                throw ConfigError("config.linear." + name + "[" + std::to_string(i * n + j) +
                                  "]: expected a number");
            M(i, j) = v.get<double>();
        }
    return M;
}

inline std::vector<dsl::ExprPtr> read_exprs(const json& nonlinear, const std::string& name, int n,
                                            const dsl::SpaceDims& dims) {
    std::vector<dsl::ExprPtr> out;
    if (!nonlinear.contains(name)) {
        if (n == 0) return out;
        throw ConfigError("config.nonlinear: missing component list " + name);
    }
    const json& arr = nonlinear.at(name);
    if (!arr.is_array()) throw ConfigError("config.nonlinear." + name + ": expected an array of DSL strings");
    if (static_cast<int>(arr.size()) != n)
        throw ConfigError("config.nonlinear." + name + ": has " + std::to_string(arr.size()) +
                          " expressions, expected " + std::to_string(n));
    for (int i = 0; i < n; ++i) {
        const json& v = arr.at(i);
        if (!v.is_string())
            throw ConfigError("config.nonlinear." + name + "[" + std::to_string(i) +
                              "]: expected a DSL string");
        try {
            out.push_back(dsl::parse(v.get<std::string>(), dims));
        } catch (const dsl::ParseError& e) {
            throw ConfigError("config.nonlinear." + name + "[" + std::to_string(i) + "]: " + e.what());
        }
    }
    return out;
}

template <typename T>
inline void read_into(const json& obj, const std::string& key, T& target) {
    if (obj.contains(key)) target = obj.at(key).get<T>();
}

inline std::optional<double> opt_number(const json& obj, const std::string& key) {
    if (!obj.contains(key)) return std::nullopt;
    return obj.at(key).get<double>();
}

}  // namespace detail

inline Problem build_problem(const json& cfg) {
    detail::reject_unknown_keys(
        cfg, {"dimensions", "linear", "nonlinear", "constants", "cutoff", "numerics"}, "(top level)");
    if (!cfg.contains("dimensions")) throw ConfigError("config: missing section 'dimensions'");
    if (!cfg.contains("linear")) throw ConfigError("config: missing section 'linear'");
    if (!cfg.contains("nonlinear")) throw ConfigError("config: missing section 'nonlinear'");

    const json& jd = cfg.at("dimensions");
    detail::reject_unknown_keys(jd, {"n_x", "n_y", "n_z"}, "dimensions");
    dsl::SpaceDims dims;
    if (!jd.contains("n_x") || !jd.contains("n_y") || !jd.contains("n_z"))
        throw ConfigError("config.dimensions: n_x, n_y, n_z are all required");
    dims.n_x = jd.at("n_x").get<int>();
    dims.n_y = jd.at("n_y").get<int>();
    dims.n_z = jd.at("n_z").get<int>();

    const json& jl = cfg.at("linear");
    detail::reject_unknown_keys(jl, {"A", "B", "C"}, "linear");
    Eigen::MatrixXd A = detail::read_matrix(jl, "A", dims.n_x);
    Eigen::MatrixXd B = detail::read_matrix(jl, "B", dims.n_y);
    Eigen::MatrixXd C = detail::read_matrix(jl, "C", dims.n_z);

    Problem p;
    if (cfg.contains("cutoff")) {
        const json& jc = cfg.at("cutoff");
        detail::reject_unknown_keys(jc, {"rho", "width"}, "cutoff");
        if (!jc.contains("rho")) throw ConfigError("config.cutoff: rho is required");
        p.cutoff.rho = jc.at("rho").get<double>();
        p.cutoff.width = jc.contains("width") ? jc.at("width").get<double>() : 0.5 * p.cutoff.rho;
        if (p.cutoff.rho <= 0.0 || p.cutoff.width <= 0.0)
            throw ConfigError("config.cutoff: rho and width must be positive");
        p.has_cutoff = true;
    }

    const json& jn = cfg.at("nonlinear");
    detail::reject_unknown_keys(jn, {"F", "G", "H", "box"}, "nonlinear");
    auto wrap = [&](std::vector<dsl::ExprPtr> exprs, int n) -> MapPtr {
        if (n == 0) return nullptr;
        MapPtr m = std::make_shared<DslMap>(std::move(exprs), dims);
        if (p.has_cutoff) m = apply_cutoff(std::move(m), p.cutoff);
        return m;
    };
    MapPtr F = wrap(detail::read_exprs(jn, "F", dims.n_x, dims), dims.n_x);
    MapPtr G = wrap(detail::read_exprs(jn, "G", dims.n_y, dims), dims.n_y);
    MapPtr H = wrap(detail::read_exprs(jn, "H", dims.n_z, dims), dims.n_z);
    p.box_halfwidth = p.has_cutoff ? p.cutoff.rho + p.cutoff.width : 1.0;
    if (jn.contains("box")) {
        p.box_halfwidth = jn.at("box").get<double>();
        if (p.box_halfwidth <= 0.0) throw ConfigError("config.nonlinear.box: must be positive");
    }

    p.spec = make_system(dims, std::move(A), std::move(B), std::move(C), F, G, H);

    if (cfg.contains("numerics")) {
        const json& jm = cfg.at("numerics");
        detail::reject_unknown_keys(jm,
                                    {"T_max", "n_steps", "tol", "max_iters", "tail_tol", "rate_slack",
                                     "seed", "h_fd", "T_ver", "n_ver", "eta", "samples",
                                     "a_priori_check"},
                                    "numerics");
        detail::read_into(jm, "T_max", p.num.T_max);
        detail::read_into(jm, "n_steps", p.num.n_steps);
        detail::read_into(jm, "tol", p.num.tol);
        detail::read_into(jm, "max_iters", p.num.max_iters);
        detail::read_into(jm, "tail_tol", p.num.tail_tol);
        detail::read_into(jm, "rate_slack", p.num.rate_slack);
        detail::read_into(jm, "seed", p.num.seed);
        detail::read_into(jm, "h_fd", p.num.h_fd);
        detail::read_into(jm, "T_ver", p.num.T_ver);
        detail::read_into(jm, "n_ver", p.num.n_ver);
        detail::read_into(jm, "eta", p.num.eta);
        detail::read_into(jm, "samples", p.num.samples);
        detail::read_into(jm, "a_priori_check", p.num.a_priori_check);
    }

    json jc = cfg.contains("constants") ? cfg.at("constants") : json::object();
    detail::reject_unknown_keys(jc,
                                {"alpha_x", "alpha_y", "beta_y", "beta_z", "K_x", "K_y", "K_z",
                                 "delta_x", "delta_y", "delta_z", "gamma_x", "gamma_y", "gamma_z",
                                 "sigma_n", "sigma_p"},
                                "constants");

    // Lipschitz data: declared or estimated by Jacobian sampling over the box.
    const Box box = Box::centered(dims.total(), p.box_halfwidth);
    auto delta_of = [&](const MapPtr& m, const std::string& key, std::uint64_t salt) {
        if (auto v = detail::opt_number(jc, key)) return *v;
        return estimate_lipschitz(*m, box, p.num.samples, p.num.seed + salt);
    };
    p.spec.delta_x = delta_of(p.spec.F, "delta_x", 1);
    p.spec.delta_y = delta_of(p.spec.G, "delta_y", 2);
    p.spec.delta_z = delta_of(p.spec.H, "delta_z", 3);

    auto gamma_of = [&](const MapPtr& m, const std::string& key, std::uint64_t salt) {
        if (auto v = detail::opt_number(jc, key)) return *v;
        return estimate_deriv_lipschitz(*m, box, p.num.samples, p.num.seed + salt);
    };
    p.spec.gamma_x = gamma_of(p.spec.F, "gamma_x", 4);
    p.spec.gamma_y = gamma_of(p.spec.G, "gamma_y", 5);
    p.spec.gamma_z = gamma_of(p.spec.H, "gamma_z", 6);
    p.spec.has_gamma = true;

    // Rates: derived from the spectrum unless fully overridden per block.
    const VerificationGrid vgrid{p.num.T_ver, p.num.n_ver};
    if (dims.n_x) {
        auto ax = detail::opt_number(jc, "alpha_x");
        auto kx = detail::opt_number(jc, "K_x");
        if (ax && kx) {
            p.tc.alpha_x = *ax;
            p.tc.K_x = *kx;
        } else {
            RateEstimate est = derive_constants(p.spec.A, BlockKind::Stable, vgrid, p.num.eta);
            p.tc.alpha_x = ax.value_or(est.alpha);
            p.tc.K_x = kx.value_or(est.K);
            if (!est.message.empty()) p.gap.messages.push_back(est.message);
        }
    }
    {
        auto ay = detail::opt_number(jc, "alpha_y");
        auto by = detail::opt_number(jc, "beta_y");
        auto ky = detail::opt_number(jc, "K_y");
        if (ay && by && ky) {
            p.tc.alpha_y = *ay;
            p.tc.beta_y = *by;
            p.tc.K_y = *ky;
        } else {
            RateEstimate est = derive_constants(p.spec.B, BlockKind::Center, vgrid, p.num.eta);
            p.tc.alpha_y = ay.value_or(est.alpha);
            p.tc.beta_y = by.value_or(est.beta);
            p.tc.K_y = ky.value_or(est.K);
            if (!est.message.empty()) p.gap.messages.push_back(est.message);
        }
    }
    if (dims.n_z) {
        auto bz = detail::opt_number(jc, "beta_z");
        auto kz = detail::opt_number(jc, "K_z");
        if (bz && kz) {
            p.tc.beta_z = *bz;
            p.tc.K_z = *kz;
        } else {
            RateEstimate est = derive_constants(p.spec.C, BlockKind::Unstable, vgrid, p.num.eta);
            p.tc.beta_z = bz.value_or(est.beta);
            p.tc.K_z = kz.value_or(est.K);
            if (!est.message.empty()) p.gap.messages.push_back(est.message);
        }
    }
    // Degenerate subspaces get neutral sentinel rates so that the sigma
    // intervals stay finite; their gap ratios are identically 0.
    if (dims.n_x == 0) {
        p.tc.alpha_x = std::min(p.tc.alpha_y, p.tc.beta_y - p.tc.K_y * p.spec.delta_y) - 2.0;
        p.tc.K_x = 1.0;
    }
    if (dims.n_z == 0) {
        p.tc.beta_z = std::max(p.tc.beta_y, p.tc.alpha_y + p.tc.K_y * p.spec.delta_y) + 2.0;
        p.tc.K_z = 1.0;
    }

    // sigma: explicit override or C2 midpoints.
    SigmaOverride so{detail::opt_number(jc, "sigma_n"), detail::opt_number(jc, "sigma_p")};
    const LipschitzTriple d = p.deltas();
    bool sigma_failed = false;
    try {
        p.sigma = choose_sigma(p.tc, d, so);
    } catch (const ConditionError& e) {
        // keep going so that cmd_check can still emit the (failing) report
        sigma_failed = true;
        p.sigma.sigma_n = so.sigma_n.value_or(0.5 * (p.tc.alpha_x + std::min(p.tc.alpha_y, p.tc.beta_y)));
        p.sigma.sigma_p = so.sigma_p.value_or(0.5 * (std::max(p.tc.beta_y, p.tc.alpha_y) + p.tc.beta_z));
        p.gap.messages.push_back(e.what());
    }

    std::vector<std::string> earlier = std::move(p.gap.messages);
    p.gap = delta_phi(p.tc, d, p.sigma, dims.n_x > 0, dims.n_z > 0);
    for (auto& m : earlier) p.gap.messages.push_back(std::move(m));
    if (sigma_failed) p.gap.flags.c2 = false;

    const TrichotomyCheck a1 = verify_trichotomy(p.tc, p.spec, vgrid);
    p.gap.flags.a1 = p.gap.flags.a1 && a1.ok;
    if (!a1.ok)
        p.gap.messages.push_back("A1 grid verification failed: worst relative excess " +
                                 std::to_string(a1.worst_excess));

    const A2Spotcheck a2 = spotcheck_a2(p.spec, box, p.num.samples, p.num.seed + 7);
    p.gap.flags.a2 = !a2.violation;
    if (a2.violation)
        p.gap.messages.push_back("A2 spot-check exceeded a declared Lipschitz constant on the box");

    const VectorXd origin = VectorXd::Zero(dims.total());
    double at0 = 0.0;
    if (dims.n_x) at0 = std::max(at0, p.spec.F->eval(origin).lpNorm<Eigen::Infinity>());
    at0 = std::max(at0, p.spec.G->eval(origin).lpNorm<Eigen::Infinity>());
    if (dims.n_z) at0 = std::max(at0, p.spec.H->eval(origin).lpNorm<Eigen::Infinity>());
    if (at0 > 1e-12)
        p.gap.messages.push_back(
            "warning: nonlinearities do not vanish at the origin (|.| = " + std::to_string(at0) +
            "); the tail bounds assume an equilibrium at 0");

    // Resolved time grid.
    double T = p.num.T_max;
    if (T <= 0.0) {
        double rate = 1.0;
        if (dims.n_x) rate = std::min(rate, p.sigma.sigma_n - p.tc.alpha_x);
        if (dims.n_z) rate = std::min(rate, p.tc.beta_z - p.sigma.sigma_p);
        if (rate <= 0.0) rate = 1.0;  // conditions already failed; keep the grid sane
        T = 40.0 / rate;
    }
    p.grid = TimeGrid(T, p.num.n_steps);
    return p;
}

inline json load_config_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config JSON parse error: " + std::string(e.what()));
    }
}

inline Problem load_problem(const std::string& path) { return build_problem(load_config_json(path)); }

// ---- report serialization ----

inline json to_json(const GapReport& r, const TrichotomyConstants& tc, const SigmaParameters& s,
                    const LipschitzTriple& d) {
    return json{
        {"ratios",
         {{"x", r.ratio_x}, {"y_minus", r.ratio_y_minus}, {"y_plus", r.ratio_y_plus}, {"z", r.ratio_z}}},
        {"delta_phi", r.delta_phi},
        {"lipschitz_bound", r.lipschitz_bound},
        {"flags",
         {{"A1", r.flags.a1},
          {"A2", r.flags.a2},
          {"A3", r.flags.a3},
          {"C1", r.flags.c1},
          {"C2", r.flags.c2},
          {"A6", r.flags.a6}}},
        {"constants",
         {{"alpha_x", tc.alpha_x},
          {"alpha_y", tc.alpha_y},
          {"beta_y", tc.beta_y},
          {"beta_z", tc.beta_z},
          {"K_x", tc.K_x},
          {"K_y", tc.K_y},
          {"K_z", tc.K_z},
          {"delta_x", d.x},
          {"delta_y", d.y},
          {"delta_z", d.z},
          {"sigma_n", s.sigma_n},
          {"sigma_p", s.sigma_p}}},
        {"messages", r.messages}};
}

inline json vector_to_json(const VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline json to_json(const SolveResult& r, const VectorXd& y0) {
    return json{{"y0", vector_to_json(y0)},
                {"phi_x", vector_to_json(r.phi_x)},
                {"phi_z", vector_to_json(r.phi_z)},
                {"iterations", r.iterations},
                {"final_step_norm", r.final_step_norm},
                {"measured_rates", r.measured_rates},
                {"max_rate", r.max_rate()},
                {"sigma_norm", r.sigma_norm_phi},
                {"delta_phi", r.delta_phi},
                {"tail_bound", std::max(r.tail_x_weighted, r.tail_z_weighted)}};
}

inline json to_json(const ManifoldSample& s) {
    json points = json::array();
    for (const auto& pt : s.points) {
        json j{{"y0", vector_to_json(pt.y0)}};
        if (pt.ok()) {
            j["phi_x"] = vector_to_json(pt.phi_x);
            j["phi_z"] = vector_to_json(pt.phi_z);
            j["iters"] = pt.iterations;
            j["final_step_norm"] = pt.final_step_norm;
            j["max_rate"] = pt.max_rate;
            if (pt.dphi_x.size() || pt.dphi_z.size()) {
                j["dphi_x"] = matrix_to_json(pt.dphi_x);
                j["dphi_z"] = matrix_to_json(pt.dphi_z);
            }
        } else {
            j["error"] = pt.error;
        }
        points.push_back(std::move(j));
    }
    return json{{"points", std::move(points)},
                {"lipschitz",
                 {{"bound", s.lipschitz_bound},
                  {"max_quotient", s.max_lipschitz_quotient},
                  {"violations", s.lipschitz_violations}}}};
}

inline json to_json(const ValidationReport& r) {
    return json{{"invariance_max_residual", r.invariance_max_residual},
                {"ode_residual", r.ode_residual},
                {"lipschitz_violations", r.lipschitz_violations},
                {"contraction_violations", r.contraction_violations},
                {"a2_spotcheck_max_quotient", r.a2_spotcheck_max_quotient},
                {"a2_violation", r.a2_violation},
                {"invariance_truncated", r.invariance_truncated},
                {"max_lipschitz_quotient", r.max_lipschitz_quotient},
                {"lipschitz_bound", r.lipschitz_bound},
                {"details", r.details}};
}

inline void write_manifold_csv(const ManifoldSample& s, const dsl::SpaceDims& dims,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open CSV for writing: " + path);
    const bool with_dphi = !s.points.empty() && s.points.front().dphi_x.size() > 0;
    out << "";
    for (int j = 0; j < dims.n_y; ++j) out << (j ? "," : "") << "y0_" << j + 1;
    for (int j = 0; j < dims.n_x; ++j) out << ",phi_x_" << j + 1;
    for (int j = 0; j < dims.n_z; ++j) out << ",phi_z_" << j + 1;
    if (with_dphi) {
        for (int i = 0; i < dims.n_x; ++i)
            for (int j = 0; j < dims.n_y; ++j) out << ",dphi_x_" << i + 1 << "_" << j + 1;
        for (int i = 0; i < dims.n_z; ++i)
            for (int j = 0; j < dims.n_y; ++j) out << ",dphi_z_" << i + 1 << "_" << j + 1;
    }
    out << ",iters,final_step_norm,max_rate\n";
    out.precision(17);
    for (const auto& pt : s.points) {
        if (!pt.ok()) continue;
        for (int j = 0; j < dims.n_y; ++j) out << (j ? "," : "") << pt.y0(j);
        for (int j = 0; j < dims.n_x; ++j) out << "," << pt.phi_x(j);
        for (int j = 0; j < dims.n_z; ++j) out << "," << pt.phi_z(j);
        if (with_dphi) {
            for (int i = 0; i < dims.n_x; ++i)
                for (int j = 0; j < dims.n_y; ++j) out << "," << pt.dphi_x(i, j);
            for (int i = 0; i < dims.n_z; ++i)
                for (int j = 0; j < dims.n_y; ++j) out << "," << pt.dphi_z(i, j);
        }
        out << "," << pt.iterations << "," << pt.final_step_norm << "," << pt.max_rate << "\n";
    }
}

}  // namespace lypmfd
