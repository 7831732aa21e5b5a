// lypmfd: center manifolds of autonomous ODE systems by Lyapunov-Perron
// fixed-point iteration.  JSON reports go to stdout, logs to stderr.
//
// Exit codes: 0 success, 1 condition failure, 2 numerical failure,
// 3 config error.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lypmfd/config.hpp"

namespace {

using namespace lypmfd;

VectorXd parse_vector_flag(const std::string& text, int expected, const char* what) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            size_t used = 0;
            vals.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": cannot parse '" + item + "' as a number");
        }
    }
    if (static_cast<int>(vals.size()) != expected)
        throw ConfigError(std::string(what) + ": got " + std::to_string(vals.size()) +
                          " components, expected " + std::to_string(expected));
    return Eigen::Map<VectorXd>(vals.data(), static_cast<int>(vals.size()));
}

// --grid "lo:hi:count[,lo:hi:count...]", one axis per center dimension;
// multi-axis specs produce the tensor grid.
std::vector<VectorXd> parse_grid_flag(const std::string& text, int n_y) {
    struct Axis {
        double lo, hi;
        int count;
    };
    std::vector<Axis> axes;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        Axis ax{};
        if (std::sscanf(item.c_str(), "%lf:%lf:%d", &ax.lo, &ax.hi, &ax.count) != 3)
            throw ConfigError("--grid: cannot parse axis '" + item + "' (want lo:hi:count)");
        if (ax.count < 1) throw ConfigError("--grid: count must be >= 1");
        axes.push_back(ax);
    }
    if (static_cast<int>(axes.size()) != n_y)
        throw ConfigError("--grid: got " + std::to_string(axes.size()) + " axes, expected n_y = " +
                          std::to_string(n_y));
    std::vector<VectorXd> points;
    std::vector<int> idx(axes.size(), 0);
    for (;;) {
        VectorXd y(n_y);
        for (int a = 0; a < n_y; ++a) {
            const Axis& ax = axes[a];
            y(a) = ax.count == 1 ? ax.lo : ax.lo + (ax.hi - ax.lo) * idx[a] / (ax.count - 1);
        }
        points.push_back(std::move(y));
        int a = 0;
        for (; a < n_y; ++a) {
            if (++idx[a] < axes[a].count) break;
            idx[a] = 0;
        }
        if (a == n_y) break;
    }
    return points;
}

int require_conditions(const Problem& p) {
    if (p.gap.conditions_pass()) return exit_code::ok;
    for (const auto& m : p.gap.messages) std::cerr << "condition failure: " << m << "\n";
    return exit_code::condition_failure;
}

int cmd_check(const Problem& p) {
    std::cout << to_json(p.gap, p.tc, p.sigma, p.deltas()).dump(2) << "\n";
    return p.gap.conditions_pass() ? exit_code::ok : exit_code::condition_failure;
}

int cmd_solve(const Problem& p, const VectorXd& y0, const std::string& dump_path) {
    if (int rc = require_conditions(p)) return rc;
    SolveResult r =
        solve_fixed_point(y0, p.spec, p.tc, p.sigma, p.grid, p.num.solver_config());
    std::cerr << "solve: " << r.iterations << " iterations, final step " << r.final_step_norm
              << "\n";
    if (!dump_path.empty()) write_trajectory_csv(r.phi, p.spec.dims, dump_path);
    std::cout << to_json(r, y0).dump(2) << "\n";
    return exit_code::ok;
}

int cmd_sample(const Problem& p, const std::string& grid_spec, bool with_jacobian,
               const std::string& csv_path) {
    if (int rc = require_conditions(p)) return rc;
    std::vector<VectorXd> grid = parse_grid_flag(grid_spec, p.spec.dims.n_y);
    ManifoldSample sample =
        sample_manifold(grid, p.spec, p.tc, p.sigma, p.grid, p.num.solver_config());
    if (with_jacobian) {
        for (auto& pt : sample.points) {
            if (!pt.ok()) continue;
            try {
                SolveResult sr =
                    solve_fixed_point(pt.y0, p.spec, p.tc, p.sigma, p.grid, p.num.solver_config());
                JacobianResult jr =
                    solve_T1_fixed_point(sr.phi, p.spec, p.tc, p.sigma, p.num.solver_config());
                pt.dphi_x = jr.dphi_x;
                pt.dphi_z = jr.dphi_z;
            } catch (const std::exception& e) {
                pt.error = e.what();
            }
        }
    }
    if (!csv_path.empty()) write_manifold_csv(sample, p.spec.dims, csv_path);
    std::cout << to_json(sample).dump(2) << "\n";
    int failures = 0;
    for (const auto& pt : sample.points)
        if (!pt.ok()) ++failures;
    if (failures) std::cerr << "sample: " << failures << " of " << sample.points.size()
                            << " points failed\n";
    return exit_code::ok;
}

int cmd_jacobian(const Problem& p, const VectorXd& y0, double h_fd) {
    if (int rc = require_conditions(p)) return rc;
    const FixedPointConfig cfg = p.num.solver_config();
    SolveResult sr = solve_fixed_point(y0, p.spec, p.tc, p.sigma, p.grid, cfg);
    JacobianResult jr = solve_T1_fixed_point(sr.phi, p.spec, p.tc, p.sigma, cfg);

    // central-difference cross-check of each DPhi column with two extra solves
    double max_disc = 0.0;
    for (int j = 0; j < p.spec.dims.n_y; ++j) {
        VectorXd e = VectorXd::Zero(p.spec.dims.n_y);
        e(j) = h_fd;
        SolveResult plus = solve_fixed_point(y0 + e, p.spec, p.tc, p.sigma, p.grid, cfg);
        SolveResult minus = solve_fixed_point(y0 - e, p.spec, p.tc, p.sigma, p.grid, cfg);
        if (p.spec.dims.n_x) {
            const VectorXd fd = (plus.phi_x - minus.phi_x) / (2.0 * h_fd);
            max_disc = std::max(max_disc, (fd - jr.dphi_x.col(j)).lpNorm<Eigen::Infinity>());
        }
        if (p.spec.dims.n_z) {
            const VectorXd fd = (plus.phi_z - minus.phi_z) / (2.0 * h_fd);
            max_disc = std::max(max_disc, (fd - jr.dphi_z.col(j)).lpNorm<Eigen::Infinity>());
        }
    }

    json out{{"y0", vector_to_json(y0)},
             {"dphi_x", matrix_to_json(jr.dphi_x)},
             {"dphi_z", matrix_to_json(jr.dphi_z)},
             {"iterations", jr.iterations},
             {"final_step_norm", jr.final_step_norm},
             {"max_rate", jr.max_rate()},
             {"fd_check", {{"h", h_fd}, {"max_discrepancy", max_disc}}}};
    std::cout << out.dump(2) << "\n";
    return exit_code::ok;
}

int cmd_validate(const Problem& p, const VectorXd& y0, double horizon, double h_rk,
                 double invariance_tol, double ode_c, int pairs, double box_override) {
    if (int rc = require_conditions(p)) return rc;
    const FixedPointConfig cfg = p.num.solver_config();
    ValidationReport rep;

    const double box_hw = box_override > 0.0 ? box_override : p.box_halfwidth;
    const A2Spotcheck a2 =
        spotcheck_a2(p.spec, Box::centered(p.spec.total_dim(), box_hw), pairs, p.num.seed + 7);
    rep.a2_spotcheck_max_quotient = std::max({a2.quotient_x, a2.quotient_y, a2.quotient_z});
    rep.a2_violation = a2.violation;
    if (a2.violation) rep.details.push_back("A2 spot-check exceeded a declared Lipschitz constant");

    SolveResult sr = solve_fixed_point(y0, p.spec, p.tc, p.sigma, p.grid, cfg);
    for (double r : sr.measured_rates)
        if (r > sr.delta_phi + cfg.rate_slack) ++rep.contraction_violations;
    rep.ode_residual = ode_residual_check(sr.phi, p.spec);
    const double h = p.grid.step();
    const bool ode_ok = rep.ode_residual <= ode_c * h * h + cfg.tol;
    if (!ode_ok) rep.details.push_back("ODE residual exceeds C h^2 + tol");

    const CutoffSpec* plateau = p.has_cutoff ? &p.cutoff : nullptr;
    InvarianceReport inv =
        invariance_check(y0, p.spec, p.tc, p.sigma, p.grid, cfg, horizon, h_rk, plateau);
    rep.invariance_max_residual = inv.max_residual;
    rep.invariance_truncated = inv.truncated;
    if (!inv.message.empty()) rep.details.push_back(inv.message);

    // small manifold sweep around y0 for the Lipschitz statistics
    std::vector<VectorXd> grid;
    for (int k = -2; k <= 2; ++k) grid.push_back(y0 * (1.0 + 0.25 * k));
    ManifoldSample sample = sample_manifold(grid, p.spec, p.tc, p.sigma, p.grid, cfg);
    rep.lipschitz_violations = sample.lipschitz_violations;
    rep.max_lipschitz_quotient = sample.max_lipschitz_quotient;
    rep.lipschitz_bound = sample.lipschitz_bound;

    std::cout << to_json(rep).dump(2) << "\n";

    const bool hard_fail = rep.a2_violation || rep.contraction_violations > 0 ||
                           rep.lipschitz_violations > 0 || !ode_ok ||
                           rep.invariance_max_residual > invariance_tol;
    return hard_fail ? exit_code::numerical_failure : exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"center manifolds by Lyapunov-Perron fixed-point iteration"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed_override;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON problem description")->required();
        sub->add_option("--seed", seed_override, "override numerics.seed (controls all sampling)");
    };

    auto* check = app.add_subcommand("check", "verify A1-A3, C1-C2, A6 and report delta_phi");
    add_common(check);

    auto* solve = app.add_subcommand("solve", "run the fixed-point iteration at one y0");
    add_common(solve);
    std::string y0_text, dump_path;
    solve->add_option("--y0", y0_text, "center coordinate, comma separated")->required();
    solve->add_option("--dump-trajectory", dump_path, "write phi*(t) as CSV");

    auto* sample = app.add_subcommand("sample", "sample the manifold over a center-space grid");
    add_common(sample);
    std::string grid_text, csv_path;
    bool with_jacobian = false;
    sample->add_option("--grid", grid_text, "per-axis lo:hi:count, comma separated")->required();
    sample->add_option("--csv", csv_path, "also write a flattened CSV");
    sample->add_flag("--with-jacobian", with_jacobian, "append DPhi blocks per point");

    auto* jacobian = app.add_subcommand("jacobian", "DPhi(y0) via the differentiated operator");
    add_common(jacobian);
    std::string jy0_text;
    double fd_h = 1e-3;
    jacobian->add_option("--y0", jy0_text, "center coordinate, comma separated")->required();
    jacobian->add_option("--fd-step", fd_h, "step of the finite-difference cross-check");

    auto* validate = app.add_subcommand("validate", "independent cross-checks; nonzero exit on hard failure");
    add_common(validate);
    std::string vy0_text;
    double horizon = 5.0, h_rk = 0.01, inv_tol = 1e-4, ode_c = 1.0, vbox = 0.0;
    int pairs = 4096;
    validate->add_option("--y0", vy0_text, "center coordinate, comma separated")->required();
    validate->add_option("--horizon", horizon, "invariance horizon T");
    validate->add_option("--rk-step", h_rk, "RK4 step");
    validate->add_option("--invariance-tol", inv_tol, "hard bound on the invariance residual");
    validate->add_option("--ode-c", ode_c, "C in the ODE-residual bound C h^2 + tol");
    validate->add_option("--pairs", pairs, "sample pairs for the A2 spot-check");
    validate->add_option("--box", vbox, "half-width of the A2 spot-check box (default: config box)");

    CLI11_PARSE(app, argc, argv);

    try {
        lypmfd::json raw = lypmfd::load_config_json(config_path);
        if (seed_override) raw["numerics"]["seed"] = *seed_override;
        lypmfd::Problem p = lypmfd::build_problem(raw);

        if (check->parsed()) return cmd_check(p);
        if (solve->parsed())
            return cmd_solve(p, parse_vector_flag(y0_text, p.spec.dims.n_y, "--y0"), dump_path);
        if (sample->parsed()) return cmd_sample(p, grid_text, with_jacobian, csv_path);
        if (jacobian->parsed())
            return cmd_jacobian(p, parse_vector_flag(jy0_text, p.spec.dims.n_y, "--y0"), fd_h);
        if (validate->parsed())
            return cmd_validate(p, parse_vector_flag(vy0_text, p.spec.dims.n_y, "--y0"), horizon,
                                h_rk, inv_tol, ode_c, pairs, vbox);
    } catch (const lypmfd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return lypmfd::exit_code::config_error;
    } catch (const lypmfd::ConditionError& e) {
        std::cerr << "condition failure: " << e.what() << "\n";
        return lypmfd::exit_code::condition_failure;
    } catch (const lypmfd::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return lypmfd::exit_code::numerical_failure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lypmfd::exit_code::numerical_failure;
    }
    return lypmfd::exit_code::ok;
}
