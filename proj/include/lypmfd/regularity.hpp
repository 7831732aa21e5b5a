#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lypmfd/operator.hpp"

namespace lypmfd {

// Differentiating the fixed-point equation phi = T(phi, y0) with respect to
// the center coordinate gives the linear operator
//
//   T1(Delta)(t) =  e^{tB} + int_0^t e^{(t-s)B} DG(phi0(s)) Delta(s) ds   (Y)
//                 - int_t^inf  e^{(t-s)C} DH(phi0(s)) Delta(s) ds         (Z)
//                 + int_{-inf}^t e^{(t-s)A} DF(phi0(s)) Delta(s) ds       (X)
//
// on node-wise linear maps Y -> E.  Its fixed point Delta* is the derivative
// of phi* in y0, and DPhi(y0) = Delta*(0)|_{X x Z rows}.

struct LinearizedTrajectory {
    TimeGrid grid;
    std::vector<Eigen::MatrixXd> values;  // one (n_x+n_y+n_z) x n_y matrix per node

    static LinearizedTrajectory zero(const TimeGrid& g, int dim, int n_y) {
        LinearizedTrajectory L{g, {}};
        L.values.assign(g.size(), Eigen::MatrixXd::Zero(dim, n_y));
        return L;
    }
};

inline LinearizedTrajectory apply_T1(const LinearizedTrajectory& delta, const Trajectory& phi0,
                                     const SystemSpec& spec, const TrichotomyConstants& tc,
                                     const SigmaParameters& sigma, double tail_tol = 1e-8) {
    const auto& dims = spec.dims;
    const TimeGrid& g = phi0.grid;
    if (delta.values.size() != static_cast<size_t>(g.size()))
        throw DimensionError("apply_T1: linearized trajectory node count mismatch");
    const int nodes = g.size();

    std::vector<Eigen::MatrixXd> fX(nodes), fY(nodes), fZ(nodes);
    for (int i = 0; i < nodes; ++i) {
        const VectorXd u = phi0.values.col(i);
        const Eigen::MatrixXd& D = delta.values[i];
        fX[i] = dims.n_x ? Eigen::MatrixXd(spec.F->jacobian(u) * D)
                         : Eigen::MatrixXd::Zero(0, dims.n_y);
        fY[i] = spec.G->jacobian(u) * D;
        fZ[i] = dims.n_z ? Eigen::MatrixXd(spec.H->jacobian(u) * D)
                         : Eigen::MatrixXd::Zero(0, dims.n_y);
    }

    LinearizedTrajectory out = LinearizedTrajectory::zero(g, dims.total(), dims.n_y);
    const std::vector<Eigen::MatrixXd> flow = center_flow_matrix(spec.B, g);
    const std::vector<Eigen::MatrixXd> iy = detail::sweep_y(spec.B, g, fY);
    std::vector<Eigen::MatrixXd> ix, iz;
    if (dims.n_x) ix = detail::sweep_x(spec.A, g, fX);
    if (dims.n_z) iz = detail::sweep_z(spec.C, g, fZ);

    const double amp = sigma_norm_linearized(delta.values, g, sigma);
    const TailModel tail = TailModel::from_norm(amp, sigma);
    if (dims.n_x) {
        const TailRates rates{tc.K_x, spec.delta_x, tc.alpha_x};
        const TailBound b = tail_bound_at(IntegralKind::X, -0.5 * g.T_max, g.T_max, rates, tail, sigma);
        enforce_tail_tolerance(b, -0.5 * g.T_max, g.T_max, amp, tail_tol);
    }
    if (dims.n_z) {
        const TailRates rates{tc.K_z, spec.delta_z, tc.beta_z};
        const TailBound b = tail_bound_at(IntegralKind::Z, 0.5 * g.T_max, g.T_max, rates, tail, sigma);
        enforce_tail_tolerance(b, 0.5 * g.T_max, g.T_max, amp, tail_tol);
    }

    for (int i = 0; i < nodes; ++i) {
        if (dims.n_x) out.values[i].topRows(dims.n_x) = ix[i];
        out.values[i].middleRows(dims.n_x, dims.n_y) = flow[i] + iy[i];
        if (dims.n_z) out.values[i].bottomRows(dims.n_z) = -iz[i];
        if (!out.values[i].allFinite())
            throw NumericError("apply_T1 produced non-finite values");
    }
    return out;
}

struct JacobianResult {
    LinearizedTrajectory delta;
    Eigen::MatrixXd dphi_x;  // n_x x n_y
    Eigen::MatrixXd dphi_z;  // n_z x n_y
    int iterations = 0;
    double final_step_norm = 0.0;
    std::vector<double> measured_rates;

    double max_rate() const {
        double m = 0.0;
        for (double r : measured_rates) m = std::max(m, r);
        return m;
    }
};

// Same iteration as solve_fixed_point, in the F_{1,sigma} norm, from
// Delta_0(t) = (0, e^{tB}, 0).
inline JacobianResult solve_T1_fixed_point(const Trajectory& phi0, const SystemSpec& spec,
                                           const TrichotomyConstants& tc, const SigmaParameters& sigma,
                                           const FixedPointConfig& cfg) {
    const LipschitzTriple d{spec.delta_x, spec.delta_y, spec.delta_z};
    const GapReport gap = delta_phi(tc, d, sigma, spec.dims.n_x > 0, spec.dims.n_z > 0);
    if (!gap.flags.c1 || !gap.flags.c2)
        throw ConditionError("solve_T1_fixed_point precondition failed: delta_phi = " +
                             std::to_string(gap.delta_phi));

    const TimeGrid& g = phi0.grid;
    JacobianResult res;
    LinearizedTrajectory delta = LinearizedTrajectory::zero(g, spec.dims.total(), spec.dims.n_y);
    {
        const std::vector<Eigen::MatrixXd> flow = center_flow_matrix(spec.B, g);
        for (int i = 0; i < g.size(); ++i)
            delta.values[i].middleRows(spec.dims.n_x, spec.dims.n_y) = flow[i];
    }

    double prev_step = -1.0;
    int consecutive_violations = 0;
    bool converged = false;
    std::vector<Eigen::MatrixXd> diff(g.size());
    for (int k = 0; k < cfg.max_iters; ++k) {
        LinearizedTrajectory next = apply_T1(delta, phi0, spec, tc, sigma, cfg.tail_tol);
        for (int i = 0; i < g.size(); ++i) diff[i] = next.values[i] - delta.values[i];
        const double step = sigma_norm_linearized(diff, g, sigma);
        if (prev_step > 0.0) {
            const double rate = step / prev_step;
            res.measured_rates.push_back(rate);
            if (rate > gap.delta_phi + cfg.rate_slack) {
                if (++consecutive_violations >= 3)
                    throw NumericError("T1 contraction watchdog: measured rate " + std::to_string(rate) +
                                       " exceeded delta_phi + rate_slack for 3 consecutive iterations");
            } else {
                consecutive_violations = 0;
            }
        }
        delta = std::move(next);
        res.iterations = k + 1;
        res.final_step_norm = step;
        if (step < cfg.tol) {
            converged = true;
            break;
        }
        prev_step = step;
    }
    if (!converged)
        throw NumericError("solve_T1_fixed_point: max_iters exceeded (final step norm " +
                           std::to_string(res.final_step_norm) + ")");

    const Eigen::MatrixXd& at0 = delta.values[g.mid()];
    res.dphi_x = at0.topRows(spec.dims.n_x);
    res.dphi_z = at0.bottomRows(spec.dims.n_z);
    res.delta = std::move(delta);
    return res;
}

// Section-4 lemma: |phi1(t) - phi2(t)| <= K_y e e^{(K_y dy + alpha_y) t} |y1 - y2|
// for t >= 0 and K_y e e^{(beta_y - K_y dy) t} |y1 - y2| for t <= 0.
struct PairBoundReport {
    double max_ratio = 0.0;  // max over grid nodes of lhs / rhs (no slack)
    double argmax_t = 0.0;
    bool passed = true;      // max_ratio <= slack
    bool a6 = true;
};

inline PairBoundReport check_phi_pair_bound(const VectorXd& y1, const VectorXd& y2,
                                            const Trajectory& phi1, const Trajectory& phi2,
                                            const TrichotomyConstants& tc, const LipschitzTriple& d,
                                            double slack = 1.05) {
    if (!(phi1.grid == phi2.grid)) throw DimensionError("check_phi_pair_bound: grid mismatch");
    PairBoundReport rep;
    rep.a6 = (tc.K_y * d.y + tc.alpha_y <= 0.0) && (tc.beta_y - tc.K_y * d.y >= 0.0);
    const double dy = (y1 - y2).lpNorm<Eigen::Infinity>();
    if (dy == 0.0) return rep;  // both sides zero: the bound holds with equality
    // the exponential rate on each half line is exactly v(t) = c(t) + k(t)
    const double scale = tc.K_y * std::exp(1.0) * dy;
    for (int i = 0; i < phi1.grid.size(); ++i) {
        const double t = phi1.grid.node(i);
        const double lhs = (phi1.values.col(i) - phi2.values.col(i)).lpNorm<Eigen::Infinity>();
        const double rhs = scale * std::exp(v_of_t(tc, d, t) * t);
        const double ratio = lhs / rhs;
        if (ratio > rep.max_ratio) {
            rep.max_ratio = ratio;
            rep.argmax_t = t;
        }
    }
    rep.passed = rep.max_ratio <= slack;
    return rep;
}

// Lipschitz-quotient check on DPhi over adjacent grid pairs against the
// continuity constant assembled from (1 - delta_phi)^{-1}, |Delta*|_{1,sigma}
// and the two gap-restricted ratios.  The branch of (v, sigma) is ambiguous at
// the two signs of t, so both are evaluated and the larger constant used.
struct DphiContinuityReport {
    std::vector<double> quotients;
    double max_quotient = 0.0;
    double bound = 0.0;
    bool bounded = true;   // all quotients below the assembled constant
    bool a6 = true;
    std::vector<std::string> messages;
};

inline DphiContinuityReport check_dphi_continuity(const std::vector<VectorXd>& y_grid,
                                                  const SystemSpec& spec,
                                                  const TrichotomyConstants& tc,
                                                  const SigmaParameters& sigma, const TimeGrid& g,
                                                  const FixedPointConfig& cfg) {
    if (y_grid.size() < 2)
        throw ConfigError("check_dphi_continuity: need at least two grid points");
    if (!spec.has_gamma)
        throw ConfigError("check_dphi_continuity: A5 constants (gamma) are not available");

    const LipschitzTriple d{spec.delta_x, spec.delta_y, spec.delta_z};
    const GapReport gap = delta_phi(tc, d, sigma, spec.dims.n_x > 0, spec.dims.n_z > 0);

    DphiContinuityReport rep;
    rep.a6 = gap.flags.a6;
    if (!rep.a6)
        rep.messages.push_back("A6 fails: the continuity constant is formally unavailable; "
                               "quotients are still reported");

    struct Entry {
        Eigen::MatrixXd dphi;  // stacked (n_x + n_z) x n_y
        double delta_norm = 0.0;
    };
    std::vector<Entry> entries(y_grid.size());
    for (size_t i = 0; i < y_grid.size(); ++i) {
        SolveResult sr = solve_fixed_point(y_grid[i], spec, tc, sigma, g, cfg);
        JacobianResult jr = solve_T1_fixed_point(sr.phi, spec, tc, sigma, cfg);
        entries[i].dphi = Eigen::MatrixXd(spec.dims.n_x + spec.dims.n_z, spec.dims.n_y);
        entries[i].dphi.topRows(spec.dims.n_x) = jr.dphi_x;
        entries[i].dphi.bottomRows(spec.dims.n_z) = jr.dphi_z;
        entries[i].delta_norm = sigma_norm_linearized(jr.delta.values, g, sigma);
    }

    // branch values of (v(t), sigma(t)) on the two half lines
    const double branches[2][2] = {{v_of_t(tc, d, -1.0), sigma.sigma_n},
                                   {v_of_t(tc, d, +1.0), sigma.sigma_p}};
    const double e1 = std::exp(1.0);
    double ratio_const = 0.0;
    bool const_ok = true;
    for (const auto& br : branches) {
        const double v = br[0], s = br[1];
        if (spec.dims.n_x) {
            const double den = v + s - tc.alpha_x;
            if (den <= 0.0) const_ok = false;
            else ratio_const = std::max(ratio_const, tc.K_x * tc.K_y * spec.gamma_x * e1 / den);
        }
        if (spec.dims.n_z) {
            const double den = tc.beta_z - v - s;
            if (den <= 0.0) const_ok = false;
            else ratio_const = std::max(ratio_const, tc.K_z * tc.K_y * spec.gamma_z * e1 / den);
        }
    }

    for (size_t i = 0; i + 1 < y_grid.size(); ++i) {
        const double dy = (y_grid[i] - y_grid[i + 1]).lpNorm<Eigen::Infinity>();
        if (dy == 0.0) continue;
        const Eigen::MatrixXd diff = entries[i].dphi - entries[i + 1].dphi;
        const double q = diff.rows() == 0 ? 0.0 : diff.cwiseAbs().rowwise().sum().maxCoeff() / dy;
        rep.quotients.push_back(q);
        rep.max_quotient = std::max(rep.max_quotient, q);
        const double bound_i = const_ok
                                   ? entries[i].delta_norm * ratio_const / (1.0 - gap.delta_phi)
                                   : std::numeric_limits<double>::infinity();
        rep.bound = std::max(rep.bound, bound_i);
        if (!const_ok) rep.bounded = false;
        else if (q > bound_i) rep.bounded = false;
    }
    return rep;
}

}  // namespace lypmfd
