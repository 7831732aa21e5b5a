#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include "lypmfd/quadrature.hpp"

namespace lypmfd {

// The integral operator whose fixed points are the sigma-bounded solutions:
//
//   T(phi, y0)(t) =  e^{tB} y0 + int_0^t e^{(t-s)B} G(phi(s)) ds     (Y, term I)
//                  - int_t^inf  e^{(t-s)C} H(phi(s)) ds              (Z, term II)
//                  + int_{-inf}^t e^{(t-s)A} F(phi(s)) ds            (X, term III)
//
// The manifold map is read off at t = 0: Phi(y0) = phi*(0)|_{X x Z}.

struct FixedPointConfig {
    double tol = 1e-9;
    int max_iters = 200;
    bool a_priori_check = true;
    double rate_slack = 0.05;
    double tail_tol = 1e-8;

    enum class Initial { CenterFlow, Zero };
    Initial initial = Initial::CenterFlow;
};

struct ApplyResult {
    Trajectory psi;
    double tail_x_weighted = 0.0;  // interior-max weighted tail bounds
    double tail_z_weighted = 0.0;
};

inline ApplyResult apply_T(const Trajectory& phi, const VectorXd& y0, const SystemSpec& spec,
                           const TrichotomyConstants& tc, const SigmaParameters& sigma,
                           double tail_tol = 1e-8) {
    const auto& dims = spec.dims;
    if (phi.dim() != dims.total())
        throw DimensionError("apply_T: trajectory dimension " + std::to_string(phi.dim()) +
                             " does not match the system dimension " + std::to_string(dims.total()));
    if (y0.size() != dims.n_y)
        throw DimensionError("apply_T: y0 has length " + std::to_string(y0.size()) +
                             ", expected n_y = " + std::to_string(dims.n_y));
    const TimeGrid& g = phi.grid;
    const int nodes = g.size();

    Eigen::MatrixXd Fv(dims.n_x, nodes), Gv(dims.n_y, nodes), Hv(dims.n_z, nodes);
    for (int i = 0; i < nodes; ++i) {
        const VectorXd u = phi.values.col(i);
        if (dims.n_x) Fv.col(i) = spec.F->eval(u);
        Gv.col(i) = spec.G->eval(u);
        if (dims.n_z) Hv.col(i) = spec.H->eval(u);
    }

    ApplyResult out;
    out.psi = Trajectory::zero(g, dims.total());
    out.psi.values.middleRows(dims.n_x, dims.n_y) =
        center_flow(spec.B, g, y0) + detail::sweep_y(spec.B, g, Gv);

    const double amp = sigma_norm(phi, sigma);
    const TailModel tail = TailModel::from_norm(amp, sigma);
    if (dims.n_x) {
        out.psi.values.topRows(dims.n_x) = detail::sweep_x(spec.A, g, Fv);
        const TailRates rates{tc.K_x, spec.delta_x, tc.alpha_x};
        // weighted bound is monotone on each half line; the interior max sits at -T/2
        const TailBound b = tail_bound_at(IntegralKind::X, -0.5 * g.T_max, g.T_max, rates, tail, sigma);
        enforce_tail_tolerance(b, -0.5 * g.T_max, g.T_max, amp, tail_tol);
        out.tail_x_weighted = b.weighted;
    }
    if (dims.n_z) {
        out.psi.values.bottomRows(dims.n_z) = -detail::sweep_z(spec.C, g, Hv);
        const TailRates rates{tc.K_z, spec.delta_z, tc.beta_z};
        const TailBound b = tail_bound_at(IntegralKind::Z, 0.5 * g.T_max, g.T_max, rates, tail, sigma);
        enforce_tail_tolerance(b, 0.5 * g.T_max, g.T_max, amp, tail_tol);
        out.tail_z_weighted = b.weighted;
    }
    if (!out.psi.values.allFinite())
        throw NumericError("apply_T produced non-finite values (overflow in the center flow or integrals)");
    return out;
}

struct SolveResult {
    Trajectory phi;
    int iterations = 0;
    double final_step_norm = 0.0;
    std::vector<double> measured_rates;
    VectorXd phi_x, phi_z;  // Phi(y0) = phi*(0)|_{X x Z}
    double sigma_norm_phi = 0.0;
    double delta_phi = 0.0;
    double tail_x_weighted = 0.0, tail_z_weighted = 0.0;

    double max_rate() const {
        double m = 0.0;
        for (double r : measured_rates) m = std::max(m, r);
        return m;
    }
};

using IterationObserver = std::function<void(int iteration, const Trajectory& iterate)>;

inline Trajectory initial_iterate(const VectorXd& y0, const SystemSpec& spec, const TimeGrid& g,
                                  FixedPointConfig::Initial kind) {
    Trajectory phi = Trajectory::zero(g, spec.dims.total());
    if (kind == FixedPointConfig::Initial::CenterFlow)
        phi.values.middleRows(spec.dims.n_x, spec.dims.n_y) = center_flow(spec.B, g, y0);
    return phi;
}

// Iterates phi_{k+1} = T(phi_k, y0) until the successive-difference sigma
// norm drops below tol.  The contraction constant delta_phi from the gap
// lemma drives two watchdogs: the a-priori Banach iteration bound and the
// measured-rate check (3 consecutive rates above delta_phi + rate_slack
// signal a broken assumption, e.g. an underestimated delta).
inline SolveResult solve_fixed_point(const VectorXd& y0, const SystemSpec& spec,
                                     const TrichotomyConstants& tc, const SigmaParameters& sigma,
                                     const TimeGrid& g, const FixedPointConfig& cfg,
                                     const IterationObserver& observer = nullptr,
                                     const Trajectory* warm_start = nullptr) {
    if (cfg.tol <= 0.0) throw ConfigError("solve_fixed_point: tol must be positive");
    if (cfg.max_iters < 1) throw ConfigError("solve_fixed_point: max_iters must be >= 1");

    const LipschitzTriple d{spec.delta_x, spec.delta_y, spec.delta_z};
    const GapReport gap = delta_phi(tc, d, sigma, spec.dims.n_x > 0, spec.dims.n_z > 0);
    if (!gap.flags.c1 || !gap.flags.c2)
        throw ConditionError("solve_fixed_point precondition failed: C1/C2 flags do not pass "
                             "(delta_phi = " + std::to_string(gap.delta_phi) + ")");

    SolveResult res;
    res.delta_phi = gap.delta_phi;
    if (warm_start && !(warm_start->grid == g))
        throw DimensionError("solve_fixed_point: warm start lives on a different grid");
    Trajectory phi = warm_start ? *warm_start : initial_iterate(y0, spec, g, cfg.initial);
    if (observer) observer(0, phi);

    double prev_step = -1.0;
    double first_step = -1.0;
    int a_priori_limit = cfg.max_iters;
    int consecutive_violations = 0;
    bool converged = false;

    for (int k = 0; k < cfg.max_iters; ++k) {
        ApplyResult applied = apply_T(phi, y0, spec, tc, sigma, cfg.tail_tol);
        Trajectory diff{g, applied.psi.values - phi.values};
        const double step = sigma_norm(diff, sigma);

        if (prev_step > 0.0) {
            const double rate = step / prev_step;
            res.measured_rates.push_back(rate);
            if (rate > gap.delta_phi + cfg.rate_slack) {
                if (++consecutive_violations >= 3)
                    throw NumericError(
                        "contraction watchdog: measured rate " + std::to_string(rate) +
                        " exceeded delta_phi + rate_slack = " +
                        std::to_string(gap.delta_phi + cfg.rate_slack) +
                        " for 3 consecutive iterations (declared Lipschitz constants look "
                        "underestimated)");
            } else {
                consecutive_violations = 0;
            }
        }

        phi = std::move(applied.psi);
        res.iterations = k + 1;
        res.final_step_norm = step;
        res.tail_x_weighted = applied.tail_x_weighted;
        res.tail_z_weighted = applied.tail_z_weighted;
        if (observer) observer(k + 1, phi);

        if (step < cfg.tol) {
            converged = true;
            break;
        }

        if (first_step < 0.0) {
            first_step = step;
            if (cfg.a_priori_check && gap.delta_phi > 0.0 && gap.delta_phi < 1.0) {
                const double arg = cfg.tol * (1.0 - gap.delta_phi) / first_step;
                if (arg < 1.0)
                    a_priori_limit = static_cast<int>(
                                         std::ceil(std::log(arg) / std::log(gap.delta_phi))) + 1;
                else
                    a_priori_limit = 1;
            }
        }
        if (cfg.a_priori_check && k + 1 > a_priori_limit)
            throw NumericError("a-priori Banach bound violated: " + std::to_string(k + 1) +
                               " iterations exceed the geometric-decay limit " +
                               std::to_string(a_priori_limit));
        prev_step = step;
    }

    if (!converged)
        throw NumericError("solve_fixed_point: max_iters = " + std::to_string(cfg.max_iters) +
                           " exceeded (final step norm " + std::to_string(res.final_step_norm) + ")");

    res.phi_x = phi.values.col(g.mid()).segment(0, spec.dims.n_x);
    res.phi_z = phi.values.col(g.mid()).segment(spec.dims.n_x + spec.dims.n_y, spec.dims.n_z);
    res.sigma_norm_phi = sigma_norm(phi, sigma);
    res.phi = std::move(phi);
    return res;
}

struct ManifoldPoint {
    VectorXd y0;
    VectorXd phi_x, phi_z;
    Eigen::MatrixXd dphi_x, dphi_z;  // filled by the jacobian sweep when requested
    int iterations = 0;
    double final_step_norm = 0.0;
    double max_rate = 0.0;
    std::string error;  // nonempty when this point failed

    bool ok() const { return error.empty(); }
};

struct ManifoldSample {
    std::vector<ManifoldPoint> points;
    double lipschitz_bound = 0.0;  // K_y e^{delta_phi}
    double max_lipschitz_quotient = 0.0;
    int lipschitz_violations = 0;
};

// Independent solve per center grid point; a point failure is recorded and
// does not abort the sweep.  Pairwise quotients |Phi(y_i) - Phi(y_j)| /
// |y_i - y_j| are compared against the K_y e^{delta_phi} bound.
inline ManifoldSample sample_manifold(const std::vector<VectorXd>& y_grid, const SystemSpec& spec,
                                      const TrichotomyConstants& tc, const SigmaParameters& sigma,
                                      const TimeGrid& g, const FixedPointConfig& cfg) {
    ManifoldSample sample;
    sample.points.resize(y_grid.size());

    std::vector<std::future<void>> jobs;
    jobs.reserve(y_grid.size());
    for (size_t i = 0; i < y_grid.size(); ++i) {
        jobs.push_back(std::async(std::launch::async, [&, i] {
            ManifoldPoint& p = sample.points[i];
            p.y0 = y_grid[i];
            try {
                SolveResult r = solve_fixed_point(y_grid[i], spec, tc, sigma, g, cfg);
                p.phi_x = r.phi_x;
                p.phi_z = r.phi_z;
                p.iterations = r.iterations;
                p.final_step_norm = r.final_step_norm;
                p.max_rate = r.max_rate();
            } catch (const std::exception& e) {
                p.error = e.what();
            }
        }));
    }
    for (auto& j : jobs) j.get();

    const LipschitzTriple d{spec.delta_x, spec.delta_y, spec.delta_z};
    const GapReport gap = delta_phi(tc, d, sigma, spec.dims.n_x > 0, spec.dims.n_z > 0);
    sample.lipschitz_bound = gap.lipschitz_bound;
    for (size_t i = 0; i < sample.points.size(); ++i) {
        if (!sample.points[i].ok()) continue;
        for (size_t j = i + 1; j < sample.points.size(); ++j) {
            if (!sample.points[j].ok()) continue;
            const double dy =
                (sample.points[i].y0 - sample.points[j].y0).lpNorm<Eigen::Infinity>();
            if (dy == 0.0) continue;
            double dphi = 0.0;
            if (spec.dims.n_x)
                dphi = std::max(dphi, (sample.points[i].phi_x - sample.points[j].phi_x)
                                          .lpNorm<Eigen::Infinity>());
            if (spec.dims.n_z)
                dphi = std::max(dphi, (sample.points[i].phi_z - sample.points[j].phi_z)
                                          .lpNorm<Eigen::Infinity>());
            const double q = dphi / dy;
            sample.max_lipschitz_quotient = std::max(sample.max_lipschitz_quotient, q);
            if (q > sample.lipschitz_bound) ++sample.lipschitz_violations;
        }
    }
    return sample;
}

}  // namespace lypmfd
