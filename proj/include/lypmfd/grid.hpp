#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <string>

#include "lypmfd/conditions.hpp"
#include "lypmfd/state.hpp"

namespace lypmfd {

// Symmetric grid on [-T_max, T_max] with an even number of steps; the middle
// node is exactly 0.
struct TimeGrid {
    double T_max = 40.0;
    int n_steps = 4096;

    TimeGrid() = default;
    TimeGrid(double T, int n) : T_max(T), n_steps(n) {
        if (!(T > 0.0)) throw ConfigError("TimeGrid: T_max must be positive");
        if (n < 2 || n % 2 != 0) throw ConfigError("TimeGrid: n_steps must be a positive even integer");
    }

    int size() const { return n_steps + 1; }
    int mid() const { return n_steps / 2; }
    double step() const { return 2.0 * T_max / n_steps; }
    double node(int i) const { return (i - mid()) * step(); }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
        return a.T_max == b.T_max && a.n_steps == b.n_steps;
    }
};

// Discretized element of the sigma-weighted trajectory space: one stacked
// state column per node.
struct Trajectory {
    TimeGrid grid;
    Eigen::MatrixXd values;  // (n_x + n_y + n_z) x (n_steps + 1)

    static Trajectory zero(const TimeGrid& g, int dim) {
        return Trajectory{g, Eigen::MatrixXd::Zero(dim, g.size())};
    }

    int dim() const { return static_cast<int>(values.rows()); }
};

// Beyond the grid the trajectory is modeled by |phi(t)| <= amplitude e^{sigma(t) t},
// which is exactly what |phi|_sigma = amplitude guarantees.
struct TailModel {
    double amplitude = 0.0;
    double rate_left = 0.0;   // sigma_n
    double rate_right = 0.0;  // sigma_p

    static TailModel from_norm(double sigma_norm_value, const SigmaParameters& s) {
        return TailModel{sigma_norm_value, s.sigma_n, s.sigma_p};
    }
};

// |phi|_sigma = max over nodes of e^{-sigma(t) t} |phi(t)|.
inline double sigma_norm(const Trajectory& phi, const SigmaParameters& s) {
    if (phi.grid.size() < 1 || phi.values.cols() == 0) throw ConfigError("sigma_norm: empty grid");
    double best = 0.0;
    for (int i = 0; i < phi.grid.size(); ++i) {
        const double w = s.weight(phi.grid.node(i));
        const double n = phi.dim() == 0 ? 0.0 : phi.values.col(i).lpNorm<Eigen::Infinity>();
        best = std::max(best, w * n);
    }
    return best;
}

// Same weighting for node-wise linear maps Y -> E (the F_{1,sigma} norm), with
// the infinity-induced matrix norm at each node.
inline double sigma_norm_linearized(const std::vector<Eigen::MatrixXd>& values, const TimeGrid& g,
                                    const SigmaParameters& s) {
    if (values.size() != static_cast<size_t>(g.size()))
        throw DimensionError("linearized trajectory has " + std::to_string(values.size()) +
                             " nodes, expected " + std::to_string(g.size()));
    double best = 0.0;
    for (int i = 0; i < g.size(); ++i) {
        const double w = s.weight(g.node(i));
        const double n =
            values[i].rows() == 0 ? 0.0 : values[i].cwiseAbs().rowwise().sum().maxCoeff();
        best = std::max(best, w * n);
    }
    return best;
}

// Linear interpolation between bracketing nodes; exact at nodes.  Tail values
// are never interpolated, only bounded, so |t| > T_max is an error.
inline Eigen::VectorXd interpolate(const Trajectory& phi, double t) {
    const TimeGrid& g = phi.grid;
    const double T = g.node(g.n_steps);
    if (t < g.node(0) - 1e-12 * g.T_max || t > T + 1e-12 * g.T_max)
        throw NumericError("interpolate: t = " + std::to_string(t) + " outside the grid [" +
                           std::to_string(-g.T_max) + ", " + std::to_string(g.T_max) + "]");
    const double pos = (t - g.node(0)) / g.step();
    int i = static_cast<int>(std::floor(pos));
    i = std::max(0, std::min(i, g.n_steps - 1));
    const double w = pos - i;
    return (1.0 - w) * phi.values.col(i) + w * phi.values.col(i + 1);
}

inline void write_trajectory_csv(const Trajectory& phi, const dsl::SpaceDims& dims,
                                 const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot open trajectory CSV for writing: " + path);
    out << "t";
    for (int j = 0; j < dims.n_x; ++j) out << ",x_" << j + 1;
    for (int j = 0; j < dims.n_y; ++j) out << ",y_" << j + 1;
    for (int j = 0; j < dims.n_z; ++j) out << ",z_" << j + 1;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < phi.grid.size(); ++i) {
        out << phi.grid.node(i);
        for (int r = 0; r < phi.dim(); ++r) out << "," << phi.values(r, i);
        out << "\n";
    }
}

}  // namespace lypmfd
