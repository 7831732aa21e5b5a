#pragma once

// Programmatic problem builders and random generators shared by the unit
// suites and the acceptance binary.

#include <random>

#include "lypmfd/config.hpp"

namespace lypmfd::testing {

struct TestProblem {
    SystemSpec spec;
    TrichotomyConstants tc;
    SigmaParameters sigma;
    TimeGrid grid;
    FixedPointConfig cfg;
    double delta_phi = 0.0;
};

inline TestProblem finalize(SystemSpec spec, TrichotomyConstants tc, int n_steps = 4096) {
    TestProblem p;
    p.spec = std::move(spec);
    p.tc = tc;
    const LipschitzTriple d{p.spec.delta_x, p.spec.delta_y, p.spec.delta_z};
    if (p.spec.dims.n_x == 0) {
        p.tc.alpha_x = std::min(p.tc.alpha_y, p.tc.beta_y - p.tc.K_y * d.y) - 2.0;
        p.tc.K_x = 1.0;
    }
    if (p.spec.dims.n_z == 0) {
        p.tc.beta_z = std::max(p.tc.beta_y, p.tc.alpha_y + p.tc.K_y * d.y) + 2.0;
        p.tc.K_z = 1.0;
    }
    p.sigma = choose_sigma(p.tc, d);
    double rate = 1.0;
    if (p.spec.dims.n_x) rate = std::min(rate, p.sigma.sigma_n - p.tc.alpha_x);
    if (p.spec.dims.n_z) rate = std::min(rate, p.tc.beta_z - p.sigma.sigma_p);
    p.grid = TimeGrid(40.0 / rate, n_steps);
    p.delta_phi = delta_phi(p.tc, d, p.sigma, p.spec.dims.n_x > 0, p.spec.dims.n_z > 0).delta_phi;
    return p;
}

inline MapPtr dsl_map(const std::vector<std::string>& exprs, const dsl::SpaceDims& dims) {
    std::vector<dsl::ExprPtr> parsed;
    for (const auto& s : exprs) parsed.push_back(dsl::parse(s, dims));
    return std::make_shared<DslMap>(std::move(parsed), dims);
}

// x' = -x + y^2, y' = 0, cutoff rho = 1: the manifold is exactly x = y^2
// inside the plateau.
inline TestProblem parabola_problem(int n_steps = 4096) {
    dsl::SpaceDims dims{1, 1, 0};
    MapPtr F = apply_cutoff(dsl_map({"y1^2"}, dims), CutoffSpec{1.0, 0.5});
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0), F);
    spec.delta_x = 0.66;
    spec.delta_y = 0.0;
    spec.gamma_x = 2.2;
    spec.gamma_y = 0.0;
    spec.has_gamma = true;
    TrichotomyConstants tc{-1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0};
    return finalize(std::move(spec), tc, n_steps);
}

// x' = -x + y^2, y' = x y, cutoff rho = 0.5: Taylor expansion of the manifold
// is y^2 - 2 y^4 + 12 y^6 + ...
inline TestProblem coupled_problem(int n_steps = 4096) {
    dsl::SpaceDims dims{1, 1, 0};
    const CutoffSpec cut{0.5, 0.25};
    MapPtr F = apply_cutoff(dsl_map({"y1^2"}, dims), cut);
    MapPtr G = apply_cutoff(dsl_map({"x1*y1"}, dims), cut);
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0), F, G);
    spec.delta_x = 0.55;
    spec.delta_y = 0.35;
    TrichotomyConstants tc{-1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0};
    TestProblem p = finalize(std::move(spec), tc, n_steps);
    p.cfg.max_iters = 500;
    return p;
}

// Linear-only system: the fixed point is reached in one application.
inline TestProblem zero_nonlinearity_problem(int n_steps = 1024) {
    dsl::SpaceDims dims{1, 1, 1};
    Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, -1.0);
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(1, 1);
    Eigen::MatrixXd C = Eigen::MatrixXd::Constant(1, 1, 1.0);
    SystemSpec spec = make_system(dims, A, B, C);
    TrichotomyConstants tc{-1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0};
    return finalize(std::move(spec), tc, n_steps);
}

// Random admissible spec with sine-type nonlinearities whose global Lipschitz
// constants are known in closed form (|c| sum |a_j|), so contraction quotients
// are honest against the declared deltas.
struct RandomSpecResult {
    TestProblem problem;
    std::mt19937_64* rng = nullptr;
};

inline TestProblem random_admissible_problem(std::mt19937_64& rng, int n_steps = 1024) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    for (int attempt = 0; attempt < 64; ++attempt) {
        dsl::SpaceDims dims;
        dims.n_x = static_cast<int>(rng() % 3);        // 0..2
        dims.n_y = 1 + static_cast<int>(rng() % 2);    // 1..2
        dims.n_z = static_cast<int>(rng() % 2);        // 0..1

        auto stable_block = [&](int n, double lo, double hi) {
            Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
            for (int i = 0; i < n; ++i) M(i, i) = uni(lo, hi);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    if (i != j) M(i, j) = uni(-0.1, 0.1);
            return M;
        };
        Eigen::MatrixXd A = stable_block(dims.n_x, -2.5, -1.2);
        Eigen::MatrixXd C = stable_block(dims.n_z, 1.2, 2.5);
        Eigen::MatrixXd B;
        if (dims.n_y == 2 && unit(rng) < 0.5) {
            const double omega = uni(0.5, 1.5);
            B = Eigen::MatrixXd::Zero(2, 2);
            B(0, 1) = omega;
            B(1, 0) = -omega;
        } else {
            B = Eigen::MatrixXd::Zero(dims.n_y, dims.n_y);
        }

        // F_i = c sin(sum a_j v_j); exact global Lipschitz |c| sum |a_j|
        auto sine_map = [&](int out, double& lip) -> MapPtr {
            if (out == 0) {
                lip = 0.0;
                return nullptr;
            }
            std::vector<dsl::ExprPtr> comps;
            lip = 0.0;
            for (int i = 0; i < out; ++i) {
                const double c = uni(0.01, 0.05);
                dsl::ExprPtr arg = dsl::constant(0.0);
                double asum = 0.0;
                auto addvar = [&](dsl::VarKind k, int n) {
                    for (int j = 0; j < n; ++j) {
                        const double a = uni(-1.0, 1.0);
                        asum += std::abs(a);
                        arg = dsl::add(arg, dsl::mul(dsl::constant(a), dsl::variable({k, j})));
                    }
                };
                addvar(dsl::VarKind::X, dims.n_x);
                addvar(dsl::VarKind::Y, dims.n_y);
                addvar(dsl::VarKind::Z, dims.n_z);
                comps.push_back(dsl::mul(dsl::constant(c), dsl::apply_fun(dsl::Op::Sin, arg)));
                lip = std::max(lip, c * asum);
            }
            return std::make_shared<DslMap>(std::move(comps), dims);
        };
        double lx = 0.0, ly = 0.0, lz = 0.0;
        MapPtr F = sine_map(dims.n_x, lx);
        MapPtr G = sine_map(dims.n_y, ly);
        MapPtr H = sine_map(dims.n_z, lz);

        SystemSpec spec = make_system(dims, A, B, C, F, G, H);
        spec.delta_x = lx;
        spec.delta_y = ly;
        spec.delta_z = lz;

        const VerificationGrid vgrid{20.0, 256};
        TrichotomyConstants tc;
        try {
            if (dims.n_x) {
                RateEstimate e = derive_constants(spec.A, BlockKind::Stable, vgrid);
                tc.alpha_x = e.alpha;
                tc.K_x = e.K;
            }
            RateEstimate ec = derive_constants(spec.B, BlockKind::Center, vgrid);
            tc.alpha_y = ec.alpha;
            tc.beta_y = ec.beta;
            tc.K_y = ec.K;
            if (dims.n_z) {
                RateEstimate e = derive_constants(spec.C, BlockKind::Unstable, vgrid);
                tc.beta_z = e.beta;
                tc.K_z = e.K;
            }
        } catch (const ConditionError&) {
            continue;
        }
        if (tc.K_x > 3.0 || tc.K_y > 3.0 || tc.K_z > 3.0) continue;

        TestProblem p;
        try {
            p = finalize(std::move(spec), tc, n_steps);
        } catch (const ConditionError&) {
            continue;
        }
        double rate = 1.0;
        if (p.spec.dims.n_x) rate = std::min(rate, p.sigma.sigma_n - p.tc.alpha_x);
        if (p.spec.dims.n_z) rate = std::min(rate, p.tc.beta_z - p.sigma.sigma_p);
        if (rate < 0.45 || p.delta_phi >= 0.8) continue;
        return p;
    }
    throw Error("random_admissible_problem: could not draw an admissible spec");
}

inline Trajectory random_trajectory(const TimeGrid& g, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Trajectory t = Trajectory::zero(g, dim);
    for (int i = 0; i < t.values.rows(); ++i)
        for (int j = 0; j < t.values.cols(); ++j) t.values(i, j) = gauss(rng);
    return t;
}

inline LinearizedTrajectory random_linearized(const TimeGrid& g, int dim, int n_y,
                                              std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    LinearizedTrajectory L = LinearizedTrajectory::zero(g, dim, n_y);
    for (auto& M : L.values)
        for (int i = 0; i < M.rows(); ++i)
            for (int j = 0; j < M.cols(); ++j) M(i, j) = gauss(rng);
    return L;
}

// ---- random expression generator for the DSL suites ----

inline dsl::ExprPtr random_expr(std::mt19937_64& rng, const dsl::SpaceDims& dims, int depth) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto coef = [&] { return std::round((unit(rng) * 4.0 - 2.0) * 100.0) / 100.0; };
    auto rand_var = [&]() -> dsl::ExprPtr {
        const int total = dims.total();
        int idx = static_cast<int>(rng() % total);
        if (idx < dims.n_x) return dsl::variable({dsl::VarKind::X, idx});
        idx -= dims.n_x;
        if (idx < dims.n_y) return dsl::variable({dsl::VarKind::Y, idx});
        return dsl::variable({dsl::VarKind::Z, idx - dims.n_y});
    };
    if (depth <= 0) {
        return unit(rng) < 0.4 ? dsl::constant(std::abs(coef())) : rand_var();
    }
    const double pick = unit(rng);
    auto sub = [&] { return random_expr(rng, dims, depth - 1); };
    if (pick < 0.18) {
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Add;
        e->a = sub();
        e->b = sub();
        return e;
    }
    if (pick < 0.34) {
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Sub;
        e->a = sub();
        e->b = sub();
        return e;
    }
    if (pick < 0.52) {
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Mul;
        e->a = sub();
        e->b = sub();
        return e;
    }
    if (pick < 0.60) {
        // division with a denominator bounded away from zero on [-1,1]^d
        auto den = std::make_shared<dsl::Expr>();
        den->op = dsl::Op::Add;
        den->a = dsl::constant(1.5 + std::abs(coef()));
        auto sq = std::make_shared<dsl::Expr>();
        sq->op = dsl::Op::Pow;
        sq->a = rand_var();
        sq->exponent = 2;
        den->b = sq;
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Div;
        e->a = sub();
        e->b = den;
        return e;
    }
    if (pick < 0.68) {
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Neg;
        e->a = sub();
        return e;
    }
    if (pick < 0.78) {
        auto e = std::make_shared<dsl::Expr>();
        e->op = dsl::Op::Pow;
        e->a = sub();
        e->exponent = 2 + static_cast<int>(rng() % 3);
        return e;
    }
    const dsl::Op funs[4] = {dsl::Op::Sin, dsl::Op::Cos, dsl::Op::Tanh, dsl::Op::Exp};
    auto e = std::make_shared<dsl::Expr>();
    e->op = funs[rng() % 4];
    e->a = sub();
    return e;
}

}  // namespace lypmfd::testing
