#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "lypmfd/nonlinear.hpp"

namespace lypmfd {

// State u = x + y + z in E = R^{n_x} x R^{n_y} x R^{n_z}.
// The norm on E is the max of the component infinity norms, which equals the
// plain infinity norm of the stacked vector.
struct StateVector {
    VectorXd x, y, z;

    double norm() const {
        double n = 0.0;
        if (x.size()) n = std::max(n, x.lpNorm<Eigen::Infinity>());
        if (y.size()) n = std::max(n, y.lpNorm<Eigen::Infinity>());
        if (z.size()) n = std::max(n, z.lpNorm<Eigen::Infinity>());
        return n;
    }
};

inline VectorXd compose(const StateVector& s) {
    VectorXd u(s.x.size() + s.y.size() + s.z.size());
    u << s.x, s.y, s.z;
    return u;
}

// The decomposed system
//   x' = A x + F(u),  y' = B y + G(u),  z' = C z + H(u).
struct SystemSpec {
    dsl::SpaceDims dims;
    MatrixXd A, B, C;
    MapPtr F, G, H;

    // A2 Lipschitz data, and (optionally) A5 Lipschitz constants of the
    // Jacobians, used by the regularity checks.
    double delta_x = 0.0, delta_y = 0.0, delta_z = 0.0;
    bool has_gamma = false;
    double gamma_x = 0.0, gamma_y = 0.0, gamma_z = 0.0;

    int total_dim() const { return dims.total(); }

    StateVector split(const VectorXd& u) const {
        if (u.size() != dims.total())
            throw DimensionError("state vector has length " + std::to_string(u.size()) +
                                 ", expected " + std::to_string(dims.total()));
        StateVector s;
        s.x = u.segment(0, dims.n_x);
        s.y = u.segment(dims.n_x, dims.n_y);
        s.z = u.segment(dims.n_x + dims.n_y, dims.n_z);
        return s;
    }

    void check_state(const StateVector& s) const {
        if (s.x.size() != dims.n_x)
            throw DimensionError("component x has length " + std::to_string(s.x.size()) +
                                 ", expected n_x = " + std::to_string(dims.n_x));
        if (s.y.size() != dims.n_y)
            throw DimensionError("component y has length " + std::to_string(s.y.size()) +
                                 ", expected n_y = " + std::to_string(dims.n_y));
        if (s.z.size() != dims.n_z)
            throw DimensionError("component z has length " + std::to_string(s.z.size()) +
                                 ", expected n_z = " + std::to_string(dims.n_z));
    }
};

// Builds a spec with zero maps substituted for missing nonlinearities and the
// basic shape invariants checked once up front.
inline SystemSpec make_system(dsl::SpaceDims dims, MatrixXd A, MatrixXd B, MatrixXd C,
                              MapPtr F = nullptr, MapPtr G = nullptr, MapPtr H = nullptr) {
    if (dims.n_y < 1) throw ConfigError("n_y must be >= 1: a center manifold needs a center direction");
    if (dims.n_x < 0 || dims.n_z < 0) throw ConfigError("dimensions must be nonnegative");
    auto check_block = [](const MatrixXd& M, int n, const char* name) {
        if (M.rows() != n || M.cols() != n)
            throw DimensionError(std::string("linear block ") + name + " is " +
                                 std::to_string(M.rows()) + "x" + std::to_string(M.cols()) +
                                 ", expected " + std::to_string(n) + "x" + std::to_string(n));
    };
    check_block(A, dims.n_x, "A");
    check_block(B, dims.n_y, "B");
    check_block(C, dims.n_z, "C");

    SystemSpec spec;
    spec.dims = dims;
    spec.A = std::move(A);
    spec.B = std::move(B);
    spec.C = std::move(C);
    spec.F = F ? std::move(F) : std::make_shared<ZeroMap>(dims.n_x, dims.total());
    spec.G = G ? std::move(G) : std::make_shared<ZeroMap>(dims.n_y, dims.total());
    spec.H = H ? std::move(H) : std::make_shared<ZeroMap>(dims.n_z, dims.total());
    if (spec.F->out_dim() != dims.n_x)
        throw DimensionError("nonlinearity F produces " + std::to_string(spec.F->out_dim()) +
                             " components, expected n_x = " + std::to_string(dims.n_x));
    if (spec.G->out_dim() != dims.n_y)
        throw DimensionError("nonlinearity G produces " + std::to_string(spec.G->out_dim()) +
                             " components, expected n_y = " + std::to_string(dims.n_y));
    if (spec.H->out_dim() != dims.n_z)
        throw DimensionError("nonlinearity H produces " + std::to_string(spec.H->out_dim()) +
                             " components, expected n_z = " + std::to_string(dims.n_z));
    return spec;
}

inline StateVector eval_rhs(const SystemSpec& spec, const StateVector& s) {
    spec.check_state(s);
    const VectorXd u = compose(s);
    StateVector out;
    out.x = spec.A * s.x + spec.F->eval(u);
    out.y = spec.B * s.y + spec.G->eval(u);
    out.z = spec.C * s.z + spec.H->eval(u);
    return out;
}

inline VectorXd eval_rhs_flat(const SystemSpec& spec, const VectorXd& u) {
    return compose(eval_rhs(spec, spec.split(u)));
}

// D(rhs)(u): linear blocks plus the stacked nonlinear Jacobians.
inline MatrixXd eval_jacobian(const SystemSpec& spec, const StateVector& s) {
    spec.check_state(s);
    const VectorXd u = compose(s);
    const int n = spec.total_dim();
    MatrixXd J = MatrixXd::Zero(n, n);
    const int ox = 0, oy = spec.dims.n_x, oz = spec.dims.n_x + spec.dims.n_y;
    J.block(ox, ox, spec.dims.n_x, spec.dims.n_x) = spec.A;
    J.block(oy, oy, spec.dims.n_y, spec.dims.n_y) = spec.B;
    J.block(oz, oz, spec.dims.n_z, spec.dims.n_z) = spec.C;
    if (spec.dims.n_x) J.middleRows(ox, spec.dims.n_x) += spec.F->jacobian(u);
    if (spec.dims.n_y) J.middleRows(oy, spec.dims.n_y) += spec.G->jacobian(u);
    if (spec.dims.n_z) J.middleRows(oz, spec.dims.n_z) += spec.H->jacobian(u);
    return J;
}

}  // namespace lypmfd
