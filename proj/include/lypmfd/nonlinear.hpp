#pragma once

#include <Eigen/Dense>
#include <memory>
#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "lypmfd/expr.hpp"

namespace lypmfd {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Evaluable nonlinear term E -> R^m with Jacobian.  u is the flat state
// (x.., y.., z..).  Implementations are immutable and safe to share across
// threads.
class NonlinearMap {
public:
    virtual ~NonlinearMap() = default;
    virtual int out_dim() const = 0;
    virtual VectorXd eval(const VectorXd& u) const = 0;
    virtual MatrixXd jacobian(const VectorXd& u) const = 0;
};

using MapPtr = std::shared_ptr<const NonlinearMap>;

class ZeroMap final : public NonlinearMap {
public:
    ZeroMap(int out, int in) : out_(out), in_(in) {}
    int out_dim() const override { return out_; }
    VectorXd eval(const VectorXd&) const override { return VectorXd::Zero(out_); }
    MatrixXd jacobian(const VectorXd&) const override { return MatrixXd::Zero(out_, in_); }

private:
    int out_, in_;
};

// Central finite differences for opaque evaluators.
inline MatrixXd fd_jacobian(const NonlinearMap& f, const VectorXd& u, double h) {
    MatrixXd J(f.out_dim(), u.size());
    VectorXd up = u, um = u;
    for (int j = 0; j < u.size(); ++j) {
        up(j) = u(j) + h;
        um(j) = u(j) - h;
        J.col(j) = (f.eval(up) - f.eval(um)) / (2.0 * h);
        up(j) = u(j);
        um(j) = u(j);
    }
    return J;
}

// Wraps plain std::functions; Jacobian falls back to central differences
// unless an analytic one is supplied.
class CallbackMap final : public NonlinearMap {
public:
    using EvalFn = std::function<VectorXd(const VectorXd&)>;
    using JacFn = std::function<MatrixXd(const VectorXd&)>;

    CallbackMap(int out, EvalFn eval, JacFn jac = nullptr, double h_fd = 1e-5)
        : out_(out), eval_(std::move(eval)), jac_(std::move(jac)), h_fd_(h_fd) {}

    int out_dim() const override { return out_; }
    VectorXd eval(const VectorXd& u) const override { return eval_(u); }
    MatrixXd jacobian(const VectorXd& u) const override {
        return jac_ ? jac_(u) : fd_jacobian(*this, u, h_fd_);
    }

private:
    int out_;
    EvalFn eval_;
    JacFn jac_;
    double h_fd_;
};

// Vector of DSL expressions with precomputed symbolic partials.
class DslMap final : public NonlinearMap {
public:
    DslMap(std::vector<dsl::ExprPtr> components, dsl::SpaceDims dims)
        : components_(std::move(components)), dims_(dims) {
        partials_.resize(components_.size());
        for (size_t i = 0; i < components_.size(); ++i) {
            partials_[i].reserve(dims_.total());
            auto push = [&](dsl::VarKind k, int n) {
                for (int j = 0; j < n; ++j)
                    partials_[i].push_back(dsl::differentiate(components_[i], dsl::VarRef{k, j}));
            };
            push(dsl::VarKind::X, dims_.n_x);
            push(dsl::VarKind::Y, dims_.n_y);
            push(dsl::VarKind::Z, dims_.n_z);
        }
    }

    int out_dim() const override { return static_cast<int>(components_.size()); }

    VectorXd eval(const VectorXd& u) const override {
        VectorXd out(components_.size());
        for (size_t i = 0; i < components_.size(); ++i)
            out(static_cast<int>(i)) = dsl::eval(*components_[i], u.data(), dims_);
        return out;
    }

    MatrixXd jacobian(const VectorXd& u) const override {
        MatrixXd J(components_.size(), dims_.total());
        for (size_t i = 0; i < components_.size(); ++i)
            for (int j = 0; j < dims_.total(); ++j)
                J(static_cast<int>(i), j) = dsl::eval(*partials_[i][j], u.data(), dims_);
        return J;
    }

    const std::vector<dsl::ExprPtr>& components() const { return components_; }
    const dsl::SpaceDims& dims() const { return dims_; }

private:
    std::vector<dsl::ExprPtr> components_;
    dsl::SpaceDims dims_;
    std::vector<std::vector<dsl::ExprPtr>> partials_;
};

// C^1 cutoff: chi(r) = 1 for r <= rho, 0 for r >= rho + width, cubic
// smoothstep in between.  The radius uses the Euclidean norm so that the
// cutoff map stays C^1 (the max norm has kinks on the diagonals).
struct CutoffSpec {
    double rho = 1.0;
    double width = 0.5;
};

inline double cutoff_chi(double r, const CutoffSpec& c) {
    if (r <= c.rho) return 1.0;
    if (r >= c.rho + c.width) return 0.0;
    const double s = (r - c.rho) / c.width;
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

inline double cutoff_chi_prime(double r, const CutoffSpec& c) {
    if (r <= c.rho || r >= c.rho + c.width) return 0.0;
    const double s = (r - c.rho) / c.width;
    return -6.0 * s * (1.0 - s) / c.width;
}

class CutoffMap;

// u |-> chi(|u|_2) * f(u), globally Lipschitz with constant bounded by the
// Jacobian sup over the ball of radius rho + width.
inline MapPtr apply_cutoff(MapPtr inner, const CutoffSpec& spec);

class CutoffMap final : public NonlinearMap {
public:
    CutoffMap(MapPtr inner, CutoffSpec spec) : inner_(std::move(inner)), spec_(spec) {}

    int out_dim() const override { return inner_->out_dim(); }

    VectorXd eval(const VectorXd& u) const override {
        const double chi = cutoff_chi(u.norm(), spec_);
        if (chi == 0.0) return VectorXd::Zero(inner_->out_dim());
        return chi * inner_->eval(u);
    }

    MatrixXd jacobian(const VectorXd& u) const override {
        const double r = u.norm();
        const double chi = cutoff_chi(r, spec_);
        if (chi == 0.0) return MatrixXd::Zero(inner_->out_dim(), u.size());
        MatrixXd J = chi * inner_->jacobian(u);
        const double dchi = cutoff_chi_prime(r, spec_);
        if (dchi != 0.0 && r > 0.0)
            J.noalias() += (dchi / r) * (inner_->eval(u) * u.transpose());
        return J;
    }

    const CutoffSpec& spec() const { return spec_; }

private:
    MapPtr inner_;
    CutoffSpec spec_;
};

inline MapPtr apply_cutoff(MapPtr inner, const CutoffSpec& spec) {
    return std::make_shared<CutoffMap>(std::move(inner), spec);
}

// Axis-aligned sampling box, componentwise over the flat state.
struct Box {
    VectorXd lo, hi;

    static Box centered(int dim, double halfwidth) {
        Box b;
        b.lo = VectorXd::Constant(dim, -halfwidth);
        b.hi = VectorXd::Constant(dim, halfwidth);
        return b;
    }
};

// Sampled sup of the induced infinity-norm of the Jacobian, inflated by a
// safety factor.  Offered as the delta estimate when the user supplies none.
inline double estimate_lipschitz(const NonlinearMap& f, const Box& box, int samples,
                                 std::uint64_t seed, double safety = 1.1) {
    if (samples < 1) throw ConfigError("estimate_lipschitz: samples must be >= 1");
    if (f.out_dim() == 0) return 0.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int dim = static_cast<int>(box.lo.size());
    VectorXd u(dim);
    double sup = 0.0;
    for (int s = 0; s < samples; ++s) {
        for (int j = 0; j < dim; ++j) u(j) = box.lo(j) + unit(rng) * (box.hi(j) - box.lo(j));
        const double norm = f.jacobian(u).cwiseAbs().rowwise().sum().maxCoeff();
        if (norm > sup) sup = norm;
    }
    return safety * sup;
}

}  // namespace lypmfd
