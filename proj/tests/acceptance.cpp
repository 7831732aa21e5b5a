// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails.  Criteria that name a CLI subcommand run the real binary;
// the rest drive the library directly.

#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "lypmfd/config.hpp"
#include "test_helpers.hpp"

using namespace lypmfd;
using namespace lypmfd::testing;

namespace {

struct CliResult {
    int exit_code = -1;
    json out;
};

CliResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string out_path = "acceptance_out_" + std::to_string(counter++) + ".json";
    const std::string cmd = std::string(LYPMFD_CLI_PATH) + " " + args + " > " + out_path + " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path);
    if (in.peek() != std::ifstream::traits_type::eof()) in >> r.out;
    std::remove(out_path.c_str());
    return r;
}

std::string cfg_path(const char* name) { return std::string(LYPMFD_CONFIG_DIR) + "/" + name; }

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// ---- criteria ----

std::string criterion_1_gap_arithmetic() {
    CliResult r = run_cli("check --config " + cfg_path("reference_constants.json"));
    require(r.exit_code == 0, "check exited " + std::to_string(r.exit_code));
    const double dphi = r.out.at("delta_phi").get<double>();
    require(dphi == 0.2, "delta_phi = " + fmt(dphi) + ", want exactly 0.2");
    const double bound = r.out.at("lipschitz_bound").get<double>();
    require(std::abs(bound - std::exp(0.2)) <= 1e-12,
            "lipschitz bound off by " + fmt(std::abs(bound - std::exp(0.2))));
    return "delta_phi = 0.2 exactly, bound within 1e-12";
}

std::string criterion_2_closed_form_manifold() {
    double worst_phi = 0.0, worst_dphi = 0.0;
    for (double y0 : {0.1, -0.1, 0.3, -0.3}) {
        CliResult s =
            run_cli("solve --config " + cfg_path("parabola.json") + " --y0 " + std::to_string(y0));
        require(s.exit_code == 0, "solve exited " + std::to_string(s.exit_code));
        worst_phi = std::max(worst_phi, std::abs(s.out.at("phi_x").at(0).get<double>() - y0 * y0));

        CliResult j = run_cli("jacobian --config " + cfg_path("parabola.json") + " --y0 " +
                              std::to_string(y0));
        require(j.exit_code == 0, "jacobian exited " + std::to_string(j.exit_code));
        worst_dphi = std::max(
            worst_dphi, std::abs(j.out.at("dphi_x").at(0).at(0).get<double>() - 2 * y0));
    }
    require(worst_phi <= 1e-4, "max |Phi - y0^2| = " + fmt(worst_phi) + " > 1e-4");
    require(worst_dphi <= 1e-3, "max |DPhi - 2 y0| = " + fmt(worst_dphi) + " > 1e-3");
    return "max errors: Phi " + fmt(worst_phi) + ", DPhi " + fmt(worst_dphi);
}

std::string criterion_3_taylor_fit() {
    Problem p = load_problem(cfg_path("coupled.json"));
    std::vector<VectorXd> grid;
    std::vector<double> ys;
    for (int k = -6; k <= 6; ++k) {
        if (k == 0) continue;
        ys.push_back(0.05 * k);
        grid.push_back(VectorXd::Constant(1, 0.05 * k));
    }
    ManifoldSample s =
        sample_manifold(grid, p.spec, p.tc, p.sigma, p.grid, p.num.solver_config());
    Eigen::MatrixXd basis(ys.size(), 4);
    Eigen::VectorXd rhs(ys.size());
    for (size_t i = 0; i < ys.size(); ++i) {
        require(s.points[i].ok(), "sample point failed: " + s.points[i].error);
        const double y = ys[i];
        basis(i, 0) = y * y;
        basis(i, 1) = y * y * y * y;
        basis(i, 2) = std::pow(y, 6);
        basis(i, 3) = std::pow(y, 8);
        rhs(i) = s.points[i].phi_x(0);
    }
    const Eigen::VectorXd coef = basis.colPivHouseholderQr().solve(rhs);
    require(std::abs(coef(0) - 1.0) <= 0.02,
            "quadratic coefficient " + fmt(coef(0)) + " not within 1 +- 0.02");
    require(std::abs(coef(1) + 2.0) <= 0.2,
            "quartic coefficient " + fmt(coef(1)) + " not within -2 +- 0.2");
    return "fit coefficients: y^2 -> " + fmt(coef(0)) + ", y^4 -> " + fmt(coef(1));
}

std::string criterion_4_contraction() {
    std::mt19937_64 rng(424242);
    double worst_T = 0.0, worst_T1 = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        TestProblem p = random_admissible_problem(rng);
        const VectorXd y0 = VectorXd::Zero(p.spec.dims.n_y);

        Trajectory phi1 = random_trajectory(p.grid, p.spec.total_dim(), rng);
        Trajectory phi2 = random_trajectory(p.grid, p.spec.total_dim(), rng);
        ApplyResult r1 = apply_T(phi1, y0, p.spec, p.tc, p.sigma, p.cfg.tail_tol);
        ApplyResult r2 = apply_T(phi2, y0, p.spec, p.tc, p.sigma, p.cfg.tail_tol);
        Trajectory num{p.grid, r1.psi.values - r2.psi.values};
        Trajectory den{p.grid, phi1.values - phi2.values};
        const double q = sigma_norm(num, p.sigma) / sigma_norm(den, p.sigma);
        require(q <= p.delta_phi + 0.05,
                "T quotient " + fmt(q) + " > delta_phi + 0.05 = " + fmt(p.delta_phi + 0.05));
        worst_T = std::max(worst_T, q / p.delta_phi);

        SolveResult sr = solve_fixed_point(y0, p.spec, p.tc, p.sigma, p.grid, p.cfg);
        LinearizedTrajectory d1 =
            random_linearized(p.grid, p.spec.total_dim(), p.spec.dims.n_y, rng);
        LinearizedTrajectory d2 =
            random_linearized(p.grid, p.spec.total_dim(), p.spec.dims.n_y, rng);
        LinearizedTrajectory o1 = apply_T1(d1, sr.phi, p.spec, p.tc, p.sigma, p.cfg.tail_tol);
        LinearizedTrajectory o2 = apply_T1(d2, sr.phi, p.spec, p.tc, p.sigma, p.cfg.tail_tol);
        std::vector<Eigen::MatrixXd> dn(p.grid.size()), dd(p.grid.size());
        for (int i = 0; i < p.grid.size(); ++i) {
            dn[i] = o1.values[i] - o2.values[i];
            dd[i] = d1.values[i] - d2.values[i];
        }
        const double q1 = sigma_norm_linearized(dn, p.grid, p.sigma) /
                          sigma_norm_linearized(dd, p.grid, p.sigma);
        require(q1 <= p.delta_phi + 0.05,
                "T1 quotient " + fmt(q1) + " > delta_phi + 0.05 = " + fmt(p.delta_phi + 0.05));
        worst_T1 = std::max(worst_T1, q1 / p.delta_phi);
    }
    return "50 specs; worst quotient/delta_phi: T " + fmt(worst_T) + ", T1 " + fmt(worst_T1);
}

std::string criterion_5_geometric_convergence() {
    double worst = 0.0;
    auto check = [&](TestProblem& p, double y) {
        std::vector<Trajectory> iterates;
        SolveResult r =
            solve_fixed_point(VectorXd::Constant(1, y), p.spec, p.tc, p.sigma, p.grid, p.cfg,
                              [&](int, const Trajectory& t) { iterates.push_back(t); });
        Trajectory d0{p.grid, iterates[1].values - iterates[0].values};
        const double s0 = sigma_norm(d0, p.sigma);
        for (size_t k = 0; k + 1 < iterates.size(); ++k) {
            Trajectory err{p.grid, iterates[k].values - r.phi.values};
            const double e = sigma_norm(err, p.sigma);
            const double banach =
                std::pow(r.delta_phi, static_cast<double>(k)) * s0 / (1.0 - r.delta_phi);
            if (banach == 0.0) {
                require(e == 0.0, "nonzero error with a zero Banach bound");
                continue;
            }
            worst = std::max(worst, e / banach);
            require(e <= 1.1 * banach, "iterate " + std::to_string(k) + ": error " + fmt(e) +
                                           " exceeds 1.1 x Banach bound " + fmt(banach));
        }
    };
    TestProblem parabola = parabola_problem();
    check(parabola, 0.3);
    TestProblem coupled = coupled_problem();
    check(coupled, 0.2);
    check(coupled, 0.3);
    return "worst error / Banach-bound ratio: " + fmt(worst);
}

std::string criterion_6_lipschitz_bound() {
    double worst_margin = 0.0;
    auto check = [&](TestProblem& p) {
        std::vector<VectorXd> grid;
        for (int k = -4; k <= 4; ++k) grid.push_back(VectorXd::Constant(1, 0.075 * k));
        ManifoldSample s = sample_manifold(grid, p.spec, p.tc, p.sigma, p.grid, p.cfg);
        for (const auto& pt : s.points) require(pt.ok(), "sample point failed: " + pt.error);
        require(s.lipschitz_violations == 0,
                std::to_string(s.lipschitz_violations) + " pairwise quotients over K_y e^{delta_phi}");
        worst_margin = std::max(worst_margin, s.max_lipschitz_quotient / s.lipschitz_bound);
    };
    TestProblem parabola = parabola_problem();
    check(parabola);
    TestProblem coupled = coupled_problem();
    check(coupled);
    return "9-point samples on both systems; worst quotient/bound = " + fmt(worst_margin);
}

std::string criterion_7_invariance() {
    TestProblem parabola = parabola_problem();
    InvarianceReport a = invariance_check(VectorXd::Constant(1, 0.3), parabola.spec, parabola.tc,
                                          parabola.sigma, parabola.grid, parabola.cfg, 5.0, 0.01);
    require(a.max_residual <= 1e-4, "parabola residual " + fmt(a.max_residual) + " > 1e-4");
    TestProblem coupled = coupled_problem();
    InvarianceReport b = invariance_check(VectorXd::Constant(1, 0.2), coupled.spec, coupled.tc,
                                          coupled.sigma, coupled.grid, coupled.cfg, 5.0, 0.01);
    require(b.max_residual <= 1e-4, "coupled residual " + fmt(b.max_residual) + " > 1e-4");
    return "residuals: parabola " + fmt(a.max_residual) + ", coupled " + fmt(b.max_residual);
}

std::string criterion_8_ode_residual() {
    const double C = 1.0;
    auto residual_at = [&](int n, double* h_out) {
        TestProblem p = coupled_problem(n);
        SolveResult r = solve_fixed_point(VectorXd::Constant(1, 0.3), p.spec, p.tc, p.sigma,
                                          p.grid, p.cfg);
        *h_out = p.grid.step();
        struct Out {
            double res, bound;
        };
        return Out{ode_residual_check(r.phi, p.spec), C * p.grid.step() * p.grid.step() + p.cfg.tol};
    };
    double h1 = 0, h2 = 0;
    const auto coarse = residual_at(2048, &h1);
    const auto fine = residual_at(4096, &h2);
    require(coarse.res <= coarse.bound,
            "residual " + fmt(coarse.res) + " > C h^2 + tol = " + fmt(coarse.bound));
    require(fine.res <= fine.bound,
            "residual " + fmt(fine.res) + " > C h^2 + tol = " + fmt(fine.bound));
    const double ratio = coarse.res / fine.res;
    require(ratio >= 3.5, "refinement ratio " + fmt(ratio) + " < 3.5");
    return "residuals " + fmt(coarse.res) + " -> " + fmt(fine.res) + ", ratio " + fmt(ratio);
}

std::string criterion_9_trivial_exactness() {
    TestProblem p = zero_nonlinearity_problem();
    SolveResult r =
        solve_fixed_point(VectorXd::Constant(1, 0.7), p.spec, p.tc, p.sigma, p.grid, p.cfg);
    require(r.iterations == 1, "solve took " + std::to_string(r.iterations) + " iterations");
    require(std::abs(r.phi_x(0)) <= p.cfg.tail_tol && std::abs(r.phi_z(0)) <= p.cfg.tail_tol,
            "Phi not within tail_tol of 0");
    JacobianResult jr = solve_T1_fixed_point(r.phi, p.spec, p.tc, p.sigma, p.cfg);
    require(jr.iterations == 1, "T1 took " + std::to_string(jr.iterations) + " iterations");
    require(jr.dphi_x.cwiseAbs().maxCoeff() <= p.cfg.tail_tol &&
                jr.dphi_z.cwiseAbs().maxCoeff() <= p.cfg.tail_tol,
            "DPhi not within tail_tol of 0");
    return "Phi = DPhi = 0, one iteration each";
}

std::string criterion_10_pair_bound() {
    std::mt19937_64 rng(1010);
    std::uniform_real_distribution<double> unit(-0.3, 0.3);
    double worst = 0.0;
    auto check = [&](TestProblem& p) {
        for (int i = 0; i < 20; ++i) {
            const VectorXd y1 = VectorXd::Constant(1, unit(rng));
            const VectorXd y2 = VectorXd::Constant(1, unit(rng));
            SolveResult a = solve_fixed_point(y1, p.spec, p.tc, p.sigma, p.grid, p.cfg);
            SolveResult b = solve_fixed_point(y2, p.spec, p.tc, p.sigma, p.grid, p.cfg);
            PairBoundReport rep = check_phi_pair_bound(
                y1, y2, a.phi, b.phi, p.tc,
                LipschitzTriple{p.spec.delta_x, p.spec.delta_y, p.spec.delta_z}, 1.05);
            require(rep.passed, "pair bound ratio " + fmt(rep.max_ratio) + " at t = " +
                                    fmt(rep.argmax_t) + " exceeds slack 1.05");
            worst = std::max(worst, rep.max_ratio);
        }
    };
    TestProblem parabola = parabola_problem();
    check(parabola);
    TestProblem coupled = coupled_problem();
    check(coupled);
    return "20 pairs per system; worst ratio " + fmt(worst) + " (slack 1.05)";
}

std::string criterion_11_dsl() {
    std::mt19937_64 rng(1111);
    const dsl::SpaceDims dims{2, 2, 1};
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    int fd_checked = 0;
    for (int i = 0; i < 1000; ++i) {
        auto e = random_expr(rng, dims, 4);
        auto back = dsl::parse(dsl::print(e), dims);
        require(dsl::equal(e, back), "round-trip mismatch for: " + dsl::print(e));

        const int v = static_cast<int>(rng() % dims.total());
        const dsl::VarRef var = v < 2   ? dsl::VarRef{dsl::VarKind::X, v}
                                : v < 4 ? dsl::VarRef{dsl::VarKind::Y, v - 2}
                                        : dsl::VarRef{dsl::VarKind::Z, 0};
        auto d = dsl::differentiate(e, var);
        for (int pt = 0; pt < 100; ++pt) {
            std::vector<double> u(dims.total());
            for (auto& x : u) x = unit(rng);
            try {
                const double f0 = dsl::eval(*e, u.data(), dims);
                if (!std::isfinite(f0) || std::abs(f0) > 1e3) continue;
                auto fd_at = [&](double step) {
                    std::vector<double> up = u, um = u;
                    up[v] += step;
                    um[v] -= step;
                    return (dsl::eval(*e, up.data(), dims) - dsl::eval(*e, um.data(), dims)) /
                           (2.0 * step);
                };
                const double fd1 = fd_at(1e-5), fd2 = fd_at(5e-6);
                const double sym = dsl::eval(*d, u.data(), dims);
                if (!std::isfinite(fd1) || !std::isfinite(fd2) || !std::isfinite(sym)) continue;
                const double tol = 1e-6 * std::max(1.0, std::abs(sym));
                if (std::abs(fd1 - fd2) > 0.25 * tol) continue;
                require(std::abs(sym - fd2) <= tol,
                        "derivative mismatch " + fmt(std::abs(sym - fd2)) + " for: " + dsl::print(e));
                ++fd_checked;
            } catch (const NumericError&) {
                continue;
            }
        }
    }
    require(fd_checked > 20000, "too few FD-checkable points: " + std::to_string(fd_checked));
    return "1000 expressions round-tripped; " + std::to_string(fd_checked) + " FD points at 1e-6";
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;  // 0 = no stated budget
    std::function<std::string()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "gap-lemma arithmetic via check", 1.0, criterion_1_gap_arithmetic},
        {2, "closed-form manifold via solve/jacobian", 30.0, criterion_2_closed_form_manifold},
        {3, "Taylor-coefficient fit on the coupled system", 120.0, criterion_3_taylor_fit},
        {4, "contraction quotients for T and T1", 120.0, criterion_4_contraction},
        {5, "geometric convergence vs the Banach bound", 0.0, criterion_5_geometric_convergence},
        {6, "manifold Lipschitz bound on 9-point samples", 0.0, criterion_6_lipschitz_bound},
        {7, "invariance residual over horizon 5", 0.0, criterion_7_invariance},
        {8, "ODE residual and O(h^2) refinement", 0.0, criterion_8_ode_residual},
        {9, "trivial exactness for zero nonlinearity", 0.0, criterion_9_trivial_exactness},
        {10, "pairwise trajectory bound with slack 1.05", 0.0, criterion_10_pair_bound},
        {11, "DSL round-trip and derivative oracle", 0.0, criterion_11_dsl},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        bool ok = true;
        try {
            detail = c.run();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok && c.budget_seconds > 0.0 && seconds > c.budget_seconds) {
            ok = false;
            detail = "runtime " + fmt(seconds) + "s exceeds the budget of " +
                     fmt(c.budget_seconds) + "s";
        }
        if (!ok) ++failures;
        std::printf("[%s] criterion %2d: %s (%s; %.2fs)\n", ok ? "PASS" : "FAIL", c.id, c.name,
                    detail.c_str(), seconds);
    }
    if (failures) std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    else std::printf("all %zu criteria passed\n", criteria.size());
    return failures == 0 ? 0 : 1;
}
