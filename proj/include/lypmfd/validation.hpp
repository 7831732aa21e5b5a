#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "lypmfd/regularity.hpp"

namespace lypmfd {

// Independent cross-checks: everything here validates the fixed-point
// machinery against a classical integrator and direct sampling, never through
// the Lyapunov-Perron path it is checking.

struct IntegrationResult {
    std::vector<double> times;
    Eigen::MatrixXd states;  // one flat state column per step
};

// Classical fixed-step RK4.  t_span may run backward (t1 < t0).
inline IntegrationResult integrate(const SystemSpec& spec, const StateVector& u0, double t0,
                                   double t1, double h) {
    if (!(h > 0.0)) throw ConfigError("integrate: step h must be positive");
    spec.check_state(u0);
    const double span = t1 - t0;
    const int steps = std::max(1, static_cast<int>(std::ceil(std::abs(span) / h - 1e-12)));
    const double dt = span / steps;

    IntegrationResult out;
    out.times.resize(steps + 1);
    out.states.resize(spec.total_dim(), steps + 1);
    VectorXd u = compose(u0);
    out.times[0] = t0;
    out.states.col(0) = u;
    for (int k = 0; k < steps; ++k) {
        const VectorXd k1 = eval_rhs_flat(spec, u);
        const VectorXd k2 = eval_rhs_flat(spec, u + 0.5 * dt * k1);
        const VectorXd k3 = eval_rhs_flat(spec, u + 0.5 * dt * k2);
        const VectorXd k4 = eval_rhs_flat(spec, u + dt * k3);
        u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!u.allFinite())
            throw NumericError("integrate: non-finite state at t = " +
                               std::to_string(t0 + (k + 1) * dt) + " (blow-up)");
        out.times[k + 1] = t0 + (k + 1) * dt;
        out.states.col(k + 1) = u;
    }
    return out;
}

struct InvarianceRecord {
    double t = 0.0;
    VectorXd y;
    double residual = 0.0;
};

struct InvarianceReport {
    double max_residual = 0.0;
    std::vector<InvarianceRecord> checkpoints;
    bool truncated = false;
    std::string message;
};

// Integrates from the on-manifold point (Phi(y0), y0) and re-solves Phi at
// the evolved center coordinate at each checkpoint (re-solving rather than
// interpolating a precomputed sample keeps interpolation error out of the
// invariance residual).
inline InvarianceReport invariance_check(const VectorXd& y0, const SystemSpec& spec,
                                         const TrichotomyConstants& tc, const SigmaParameters& sigma,
                                         const TimeGrid& g, const FixedPointConfig& cfg,
                                         double horizon, double h_rk,
                                         const CutoffSpec* plateau = nullptr) {
    InvarianceReport rep;
    SolveResult base = solve_fixed_point(y0, spec, tc, sigma, g, cfg);
    StateVector u0{base.phi_x, y0, base.phi_z};

    IntegrationResult flow = integrate(spec, u0, 0.0, horizon, h_rk);
    const int checkpoints = 8;
    for (int j = 0; j <= checkpoints; ++j) {
        const double tc_time = horizon * j / checkpoints;
        // nearest step index
        int idx = static_cast<int>(std::round(tc_time / horizon * (flow.times.size() - 1)));
        const VectorXd u = flow.states.col(idx);
        if (plateau && u.norm() > plateau->rho) {
            rep.truncated = true;
            rep.message = "trajectory left the cutoff plateau (|u| > rho) at t = " +
                          std::to_string(flow.times[idx]) + "; check truncated";
            break;
        }
        const StateVector s = spec.split(u);
        SolveResult at = solve_fixed_point(s.y, spec, tc, sigma, g, cfg);
        double res = 0.0;
        if (spec.dims.n_x) res = std::max(res, (s.x - at.phi_x).lpNorm<Eigen::Infinity>());
        if (spec.dims.n_z) res = std::max(res, (s.z - at.phi_z).lpNorm<Eigen::Infinity>());
        rep.checkpoints.push_back({flow.times[idx], s.y, res});
        rep.max_residual = std::max(rep.max_residual, res);
    }
    return rep;
}

// Max over interior nodes (|t| <= T_max / 2) of the central-difference ODE
// residual |(phi(t+h) - phi(t-h)) / 2h - rhs(phi(t))|.
inline double ode_residual_check(const Trajectory& phi, const SystemSpec& spec) {
    const TimeGrid& g = phi.grid;
    const double h = g.step();
    double worst = 0.0;
    for (int i = 1; i < g.size() - 1; ++i) {
        if (std::abs(g.node(i)) > 0.5 * g.T_max) continue;
        const VectorXd deriv = (phi.values.col(i + 1) - phi.values.col(i - 1)) / (2.0 * h);
        const VectorXd rhs = eval_rhs_flat(spec, phi.values.col(i));
        worst = std::max(worst, (deriv - rhs).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

struct A2Spotcheck {
    double quotient_x = 0.0, quotient_y = 0.0, quotient_z = 0.0;
    bool violation = false;
};

// Samples random pairs in the box and compares the worst difference quotients
// of F, G, H against the declared Lipschitz constants.
inline A2Spotcheck spotcheck_a2(const SystemSpec& spec, const Box& box, int pairs,
                                std::uint64_t seed) {
    if (pairs < 1) throw ConfigError("spotcheck_a2: pairs must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int dim = static_cast<int>(box.lo.size());
    A2Spotcheck out;
    VectorXd u1(dim), u2(dim);
    for (int p = 0; p < pairs; ++p) {
        for (int j = 0; j < dim; ++j) {
            u1(j) = box.lo(j) + unit(rng) * (box.hi(j) - box.lo(j));
            u2(j) = box.lo(j) + unit(rng) * (box.hi(j) - box.lo(j));
        }
        const double du = (u1 - u2).lpNorm<Eigen::Infinity>();
        if (du == 0.0) continue;
        if (spec.dims.n_x)
            out.quotient_x = std::max(
                out.quotient_x, (spec.F->eval(u1) - spec.F->eval(u2)).lpNorm<Eigen::Infinity>() / du);
        out.quotient_y = std::max(
            out.quotient_y, (spec.G->eval(u1) - spec.G->eval(u2)).lpNorm<Eigen::Infinity>() / du);
        if (spec.dims.n_z)
            out.quotient_z = std::max(
                out.quotient_z, (spec.H->eval(u1) - spec.H->eval(u2)).lpNorm<Eigen::Infinity>() / du);
    }
    // rounding can push an exact-ratio quotient one ulp over the declared
    // constant; compare with a matching relative tolerance
    auto exceeds = [](double q, double declared) { return q > declared * (1.0 + 1e-12); };
    out.violation = exceeds(out.quotient_x, spec.delta_x) || exceeds(out.quotient_y, spec.delta_y) ||
                    exceeds(out.quotient_z, spec.delta_z);
    return out;
}

struct DivergencePoint {
    double t = 0.0;
    double divergence = 0.0;
};

// Integrates the reduced system y' = B y + G(Phi(y)|_X + y + Phi(y)|_Z)
// against the full system started on the manifold and reports |y_full - y_red|
// along the way.  The reduced right-hand side re-solves Phi at each stage,
// warm-started from the previous fixed point.
inline std::vector<DivergencePoint> reduced_dynamics_compare(const VectorXd& y0,
                                                             const SystemSpec& spec,
                                                             const TrichotomyConstants& tc,
                                                             const SigmaParameters& sigma,
                                                             const TimeGrid& g,
                                                             const FixedPointConfig& cfg, double T,
                                                             double h_rk) {
    SolveResult base = solve_fixed_point(y0, spec, tc, sigma, g, cfg);
    StateVector u0{base.phi_x, y0, base.phi_z};
    IntegrationResult full = integrate(spec, u0, 0.0, T, h_rk);

    Trajectory warm = base.phi;
    auto phi_at = [&](const VectorXd& y) -> StateVector {
        // term I re-anchors the warm start to the new y on the first apply
        SolveResult r = solve_fixed_point(y, spec, tc, sigma, g, cfg, nullptr, &warm);
        warm = r.phi;
        return StateVector{r.phi_x, y, r.phi_z};
    };

    auto reduced_rhs = [&](const VectorXd& y) -> VectorXd {
        const StateVector s = phi_at(y);
        return spec.B * y + spec.G->eval(compose(s));
    };

    const int steps = std::max(1, static_cast<int>(std::ceil(T / h_rk - 1e-12)));
    const double dt = T / steps;
    VectorXd y = y0;
    std::vector<DivergencePoint> out;
    out.push_back({0.0, 0.0});
    for (int k = 0; k < steps; ++k) {
        const VectorXd k1 = reduced_rhs(y);
        const VectorXd k2 = reduced_rhs(y + 0.5 * dt * k1);
        const VectorXd k3 = reduced_rhs(y + 0.5 * dt * k2);
        const VectorXd k4 = reduced_rhs(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!y.allFinite())
            throw NumericError("reduced_dynamics_compare: reduced trajectory blew up at t = " +
                               std::to_string((k + 1) * dt));
        const VectorXd y_full =
            full.states.col(k + 1).segment(spec.dims.n_x, spec.dims.n_y);
        out.push_back({(k + 1) * dt, (y_full - y).lpNorm<Eigen::Infinity>()});
    }
    return out;
}

struct ValidationReport {
    double invariance_max_residual = 0.0;
    double ode_residual = 0.0;
    int lipschitz_violations = 0;
    int contraction_violations = 0;
    double a2_spotcheck_max_quotient = 0.0;
    bool a2_violation = false;
    bool invariance_truncated = false;
    double max_lipschitz_quotient = 0.0;
    double lipschitz_bound = 0.0;
    std::vector<std::string> details;
};

}  // namespace lypmfd
