#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lypmfd/grid.hpp"
#include "lypmfd/matrix_exp.hpp"

namespace lypmfd {

// Exponentially-weighted quadrature for the three integral terms
//
//   X:  int_{-inf}^{t} e^{(t-s)A} f(s) ds
//   Y:  int_{0}^{t}    e^{(t-s)B} f(s) ds
//   Z:  int_{t}^{inf}  e^{(t-s)C} f(s) ds
//
// realized as composite trapezoid on the grid portion plus an analytic bound
// for the dropped improper tail.  The all-node sweeps below evaluate the rule
// at every node in O(n) via the semigroup recursion
//   I(t_{i+1}) = e^{hM} I(t_i) + (h/2)(e^{hM} f_i + f_{i+1}),
// which reproduces the composite trapezoid sum exactly.

enum class IntegralKind { X, Y, Z };

// A1 data entering the tail bound of the dropped improper piece.
struct TailRates {
    double K = 1.0;
    double delta = 0.0;
    double rate = 0.0;  // alpha_x for X, beta_z for Z
};

struct TailBound {
    double raw = 0.0;       // bound on the dropped tail at the query time
    double weighted = 0.0;  // same, multiplied by the sigma weight e^{-sigma(t) t}
};

// X: |tail| <= K dx amp e^{alpha_x t} e^{(sigma_n - alpha_x)(-T)} / (sigma_n - alpha_x)
// Z: |tail| <= K dz amp e^{beta_z t} e^{(sigma_p - beta_z) T} / (beta_z - sigma_p)
inline TailBound tail_bound_at(IntegralKind kind, double t, double T_max, const TailRates& rates,
                               const TailModel& tail, const SigmaParameters& s) {
    TailBound out;
    if (kind == IntegralKind::Y) return out;
    const double scale = rates.K * rates.delta * tail.amplitude;
    if (scale == 0.0) return out;
    double den = 0.0, exponent = 0.0;
    if (kind == IntegralKind::X) {
        den = tail.rate_left - rates.rate;  // sigma_n - alpha_x
        exponent = rates.rate * t - den * T_max;
    } else {
        den = rates.rate - tail.rate_right;  // beta_z - sigma_p
        exponent = rates.rate * t + (tail.rate_right - rates.rate) * T_max;
    }
    if (den <= 0.0)
        throw NumericError("tail bound diverges: C1 rate separation is not positive");
    out.raw = scale * std::exp(std::min(exponent, 700.0)) / den;
    out.weighted = scale * std::exp(exponent - s.sigma(t) * t) / den;
    return out;
}

// Truncation is only guaranteed small away from the grid edges: enforce the
// weighted tail bound on the interior |t| <= T_max / 2 and report it outside.
inline void enforce_tail_tolerance(const TailBound& b, double t, double T_max, double amplitude,
                                   double tail_tol) {
    if (std::abs(t) > 0.5 * T_max) return;
    if (b.weighted > tail_tol * std::max(1.0, amplitude))
        throw NumericError("tail bound " + std::to_string(b.weighted) + " at t = " + std::to_string(t) +
                           " exceeds tail_tol; increase T_max");
}

namespace detail {

// f: one integrand column per node.  Returns the X-kind integral at every node.
inline Eigen::MatrixXd sweep_x(const Eigen::MatrixXd& M, const TimeGrid& g, const Eigen::MatrixXd& f) {
    const double h = g.step();
    const Eigen::MatrixXd E = matrix_exp(M, h);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (int i = 1; i < g.size(); ++i)
        out.col(i) = E * out.col(i - 1) + 0.5 * h * (E * f.col(i - 1) + f.col(i));
    return out;
}

inline Eigen::MatrixXd sweep_z(const Eigen::MatrixXd& M, const TimeGrid& g, const Eigen::MatrixXd& f) {
    const double h = g.step();
    const Eigen::MatrixXd E = matrix_exp(M, -h);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (int i = g.size() - 2; i >= 0; --i)
        out.col(i) = E * out.col(i + 1) + 0.5 * h * (f.col(i) + E * f.col(i + 1));
    return out;
}

inline Eigen::MatrixXd sweep_y(const Eigen::MatrixXd& M, const TimeGrid& g, const Eigen::MatrixXd& f) {
    const double h = g.step();
    const Eigen::MatrixXd Ep = matrix_exp(M, h);
    const Eigen::MatrixXd Em = matrix_exp(M, -h);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(f.rows(), f.cols());
    for (int i = g.mid() + 1; i < g.size(); ++i)
        out.col(i) = Ep * out.col(i - 1) + 0.5 * h * (Ep * f.col(i - 1) + f.col(i));
    // int_0^t = -int_t^0 for t < 0
    for (int i = g.mid() - 1; i >= 0; --i)
        out.col(i) = Em * out.col(i + 1) - 0.5 * h * (f.col(i) + Em * f.col(i + 1));
    return out;
}

// Matrix-valued integrand variants (columnwise application of the same rule).
inline std::vector<Eigen::MatrixXd> sweep_x(const Eigen::MatrixXd& M, const TimeGrid& g,
                                            const std::vector<Eigen::MatrixXd>& f) {
    const double h = g.step();
    const Eigen::MatrixXd E = matrix_exp(M, h);
    std::vector<Eigen::MatrixXd> out(f.size(), Eigen::MatrixXd::Zero(f[0].rows(), f[0].cols()));
    for (size_t i = 1; i < f.size(); ++i)
        out[i] = E * out[i - 1] + 0.5 * h * (E * f[i - 1] + f[i]);
    return out;
}

inline std::vector<Eigen::MatrixXd> sweep_z(const Eigen::MatrixXd& M, const TimeGrid& g,
                                            const std::vector<Eigen::MatrixXd>& f) {
    const double h = g.step();
    const Eigen::MatrixXd E = matrix_exp(M, -h);
    std::vector<Eigen::MatrixXd> out(f.size(), Eigen::MatrixXd::Zero(f[0].rows(), f[0].cols()));
    for (int i = static_cast<int>(f.size()) - 2; i >= 0; --i)
        out[i] = E * out[i + 1] + 0.5 * h * (f[i] + E * f[i + 1]);
    return out;
}

inline std::vector<Eigen::MatrixXd> sweep_y(const Eigen::MatrixXd& M, const TimeGrid& g,
                                            const std::vector<Eigen::MatrixXd>& f) {
    const double h = g.step();
    const Eigen::MatrixXd Ep = matrix_exp(M, h);
    const Eigen::MatrixXd Em = matrix_exp(M, -h);
    std::vector<Eigen::MatrixXd> out(f.size(), Eigen::MatrixXd::Zero(f[0].rows(), f[0].cols()));
    for (int i = g.mid() + 1; i < g.size(); ++i)
        out[i] = Ep * out[i - 1] + 0.5 * h * (Ep * f[i - 1] + f[i]);
    for (int i = g.mid() - 1; i >= 0; --i)
        out[i] = Em * out[i + 1] - 0.5 * h * (f[i] + Em * f[i + 1]);
    return out;
}

}  // namespace detail

// The center flow e^{t_i B} y0 at every node, built by stepping with e^{+-hB}.
inline Eigen::MatrixXd center_flow(const Eigen::MatrixXd& B, const TimeGrid& g,
                                   const Eigen::VectorXd& y0) {
    const Eigen::MatrixXd Ep = matrix_exp(B, g.step());
    const Eigen::MatrixXd Em = matrix_exp(B, -g.step());
    Eigen::MatrixXd out(y0.size(), g.size());
    out.col(g.mid()) = y0;
    for (int i = g.mid() + 1; i < g.size(); ++i) out.col(i) = Ep * out.col(i - 1);
    for (int i = g.mid() - 1; i >= 0; --i) out.col(i) = Em * out.col(i + 1);
    if (!out.allFinite()) throw NumericError("center flow e^{tB} y0 overflowed on the grid");
    return out;
}

inline std::vector<Eigen::MatrixXd> center_flow_matrix(const Eigen::MatrixXd& B, const TimeGrid& g) {
    const Eigen::MatrixXd Ep = matrix_exp(B, g.step());
    const Eigen::MatrixXd Em = matrix_exp(B, -g.step());
    const int m = static_cast<int>(B.rows());
    std::vector<Eigen::MatrixXd> out(g.size());
    out[g.mid()] = Eigen::MatrixXd::Identity(m, m);
    for (int i = g.mid() + 1; i < g.size(); ++i) out[i] = Ep * out[i - 1];
    for (int i = g.mid() - 1; i >= 0; --i) out[i] = Em * out[i + 1];
    return out;
}

struct WeightedIntegralResult {
    Eigen::VectorXd value;
    TailBound tail;
};

// Single-time evaluation used by tests and diagnostics; t may fall between
// nodes, in which case the final partial step uses linearly interpolated
// integrand values.  apply_T uses the all-node sweeps instead.
inline WeightedIntegralResult weighted_integral(IntegralKind kind, const Eigen::MatrixXd& M, double t,
                                                const TimeGrid& g, const Eigen::MatrixXd& f,
                                                const TailModel& tail, const TailRates& rates,
                                                const SigmaParameters& s, double tail_tol = 1e-8) {
    if (t < -g.T_max - 1e-12 * g.T_max || t > g.T_max + 1e-12 * g.T_max)
        throw NumericError("weighted_integral: t outside [-T_max, T_max]");
    if (f.cols() != g.size()) throw DimensionError("weighted_integral: integrand has wrong node count");
    WeightedIntegralResult out;
    if (f.rows() == 0) {
        out.value = Eigen::VectorXd(0);
        return out;
    }

    out.tail = tail_bound_at(kind, t, g.T_max, rates, tail, s);
    enforce_tail_tolerance(out.tail, t, g.T_max, tail.amplitude, tail_tol);

    const double h = g.step();
    const double pos = (t - g.node(0)) / h;
    auto interp_col = [&](double p) -> Eigen::VectorXd {
        int i = std::max(0, std::min(static_cast<int>(std::floor(p)), g.n_steps - 1));
        const double w = p - i;
        return (1.0 - w) * f.col(i) + w * f.col(i + 1);
    };

    if (kind == IntegralKind::X) {
        const int i0 = static_cast<int>(std::floor(pos + 1e-9));
        Eigen::VectorXd I = Eigen::VectorXd::Zero(f.rows());
        const Eigen::MatrixXd E = matrix_exp(M, h);
        for (int i = 1; i <= i0; ++i) I = E * I + 0.5 * h * (E * f.col(i - 1) + f.col(i));
        const double dt = t - g.node(i0);
        if (dt > 1e-12 * g.T_max) {
            const Eigen::MatrixXd Ed = matrix_exp(M, dt);
            I = Ed * I + 0.5 * dt * (Ed * f.col(i0) + interp_col(pos));
        }
        out.value = I;
    } else if (kind == IntegralKind::Z) {
        const int i1 = static_cast<int>(std::ceil(pos - 1e-9));
        Eigen::VectorXd I = Eigen::VectorXd::Zero(f.rows());
        const Eigen::MatrixXd E = matrix_exp(M, -h);
        for (int i = g.size() - 2; i >= i1; --i) I = E * I + 0.5 * h * (f.col(i) + E * f.col(i + 1));
        const double dt = g.node(i1) - t;
        if (dt > 1e-12 * g.T_max) {
            const Eigen::MatrixXd Ed = matrix_exp(M, -dt);
            I = Ed * I + 0.5 * dt * (interp_col(pos) + Ed * f.col(i1));
        }
        out.value = I;
    } else {
        Eigen::VectorXd I = Eigen::VectorXd::Zero(f.rows());
        if (t >= 0.0) {
            const int i0 = static_cast<int>(std::floor(pos + 1e-9));
            const Eigen::MatrixXd E = matrix_exp(M, h);
            for (int i = g.mid() + 1; i <= i0; ++i) I = E * I + 0.5 * h * (E * f.col(i - 1) + f.col(i));
            const double dt = t - g.node(std::max(i0, g.mid()));
            if (dt > 1e-12 * g.T_max) {
                const Eigen::MatrixXd Ed = matrix_exp(M, dt);
                const int base = std::max(i0, g.mid());
                I = Ed * I + 0.5 * dt * (Ed * f.col(base) + interp_col(pos));
            }
        } else {
            const int i1 = static_cast<int>(std::ceil(pos - 1e-9));
            const Eigen::MatrixXd E = matrix_exp(M, -h);
            for (int i = g.mid() - 1; i >= i1; --i) I = E * I - 0.5 * h * (f.col(i) + E * f.col(i + 1));
            const double dt = g.node(i1) - t;
            if (dt > 1e-12 * g.T_max) {
                const Eigen::MatrixXd Ed = matrix_exp(M, -dt);
                I = Ed * I - 0.5 * dt * (interp_col(pos) + Ed * f.col(i1));
            }
        }
        out.value = I;
    }
    return out;
}

}  // namespace lypmfd
