#include <catch2/catch_amalgamated.hpp>

#include "test_helpers.hpp"

using namespace lypmfd;
using Catch::Approx;

TEST_CASE("split/compose round-trips exactly") {
    dsl::SpaceDims dims{2, 1, 3};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Identity(2, 2) * -1.0,
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(3, 3));
    std::mt19937_64 rng(42);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < 200; ++i) {
        VectorXd u(6);
        for (int j = 0; j < 6; ++j) u(j) = gauss(rng);
        REQUIRE(compose(spec.split(u)) == u);
    }
}

TEST_CASE("state norm is the max of component infinity norms") {
    dsl::SpaceDims dims{2, 2, 2};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Zero(2, 2) - Eigen::MatrixXd::Identity(2, 2),
                                  Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Identity(2, 2));
    std::mt19937_64 rng(43);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < 200; ++i) {
        VectorXd u(6);
        for (int j = 0; j < 6; ++j) u(j) = gauss(rng);
        const StateVector s = spec.split(u);
        const double expected = std::max({s.x.lpNorm<Eigen::Infinity>(),
                                          s.y.lpNorm<Eigen::Infinity>(),
                                          s.z.lpNorm<Eigen::Infinity>()});
        REQUIRE(s.norm() == expected);
        REQUIRE(s.norm() == u.lpNorm<Eigen::Infinity>());
    }
}

TEST_CASE("eval_rhs: linear-only case") {
    dsl::SpaceDims dims{1, 1, 1};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, 2.0));
    StateVector u{VectorXd::Constant(1, 1.0), VectorXd::Constant(1, 1.0),
                  VectorXd::Constant(1, 1.0)};
    const StateVector r = eval_rhs(spec, u);
    REQUIRE(r.x(0) == Approx(-1.0));
    REQUIRE(r.y(0) == Approx(0.0));
    REQUIRE(r.z(0) == Approx(2.0));
}

TEST_CASE("eval_rhs: x' = -x + y^2 at (0.5, 2)") {
    dsl::SpaceDims dims{1, 1, 0};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0),
                                  lypmfd::testing::dsl_map({"y1^2"}, dims));
    StateVector u{VectorXd::Constant(1, 0.5), VectorXd::Constant(1, 2.0), VectorXd(0)};
    REQUIRE(eval_rhs(spec, u).x(0) == Approx(3.5));  // -0.5 + 4
}

TEST_CASE("eval_rhs: dimension mismatch names the component") {
    dsl::SpaceDims dims{1, 1, 0};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0));
    StateVector bad{VectorXd::Zero(2), VectorXd::Zero(1), VectorXd(0)};
    try {
        eval_rhs(spec, bad);
        FAIL("expected a dimension error");
    } catch (const DimensionError& e) {
        REQUIRE(std::string(e.what()).find("component x") != std::string::npos);
    }
}

TEST_CASE("make_system rejects bad shapes") {
    dsl::SpaceDims dims{1, 1, 0};
    REQUIRE_THROWS_AS(make_system({1, 0, 0}, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0),
                                  Eigen::MatrixXd(0, 0)),
                      ConfigError);
    REQUIRE_THROWS_AS(make_system(dims, Eigen::MatrixXd::Zero(2, 2), Eigen::MatrixXd::Zero(1, 1),
                                  Eigen::MatrixXd(0, 0)),
                      DimensionError);
    REQUIRE_THROWS_AS(make_system(dims, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1),
                                  Eigen::MatrixXd(0, 0), lypmfd::testing::dsl_map({"y1", "y1"}, dims)),
                      DimensionError);
}

TEST_CASE("eval_jacobian: zero nonlinearity gives the block diagonal") {
    dsl::SpaceDims dims{2, 1, 1};
    Eigen::MatrixXd A(2, 2);
    A << -1, 0.5, 0, -2;
    SystemSpec spec = make_system(dims, A, Eigen::MatrixXd::Zero(1, 1),
                                  Eigen::MatrixXd::Constant(1, 1, 3.0));
    StateVector u{VectorXd::Zero(2), VectorXd::Zero(1), VectorXd::Zero(1)};
    const MatrixXd J = eval_jacobian(spec, u);
    MatrixXd expected = MatrixXd::Zero(4, 4);
    expected.block(0, 0, 2, 2) = A;
    expected(3, 3) = 3.0;
    REQUIRE((J - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("eval_jacobian: dF/dy of y^2 at y = 3 is 6") {
    dsl::SpaceDims dims{1, 1, 0};
    SystemSpec spec = make_system(dims, Eigen::MatrixXd::Constant(1, 1, -1.0),
                                  Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 0),
                                  lypmfd::testing::dsl_map({"y1^2"}, dims));
    StateVector u{VectorXd::Zero(1), VectorXd::Constant(1, 3.0), VectorXd(0)};
    const MatrixXd J = eval_jacobian(spec, u);
    REQUIRE(J(0, 1) == Approx(6.0));
    REQUIRE(J(0, 0) == Approx(-1.0));
}

TEST_CASE("finite-difference fallback agrees with the analytic jacobian") {
    // random cubic polynomial spec; central differences with h_fd carry an
    // O(h^2) Taylor remainder
    dsl::SpaceDims dims{1, 2, 0};
    auto analytic = lypmfd::testing::dsl_map({"0.3*x1^3 + y1*y2 - 0.5*y2^2"}, dims);
    CallbackMap opaque(1, [&](const VectorXd& u) { return analytic->eval(u); }, nullptr, 1e-5);

    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) {
        VectorXd u(3);
        for (int j = 0; j < 3; ++j) u(j) = unit(rng);
        const MatrixXd J = analytic->jacobian(u);
        const MatrixXd Jfd = opaque.jacobian(u);
        REQUIRE((J - Jfd).cwiseAbs().maxCoeff() <= 10.0 * 1e-5 * 1e-5);
    }
}

TEST_CASE("property: analytic vs finite-difference jacobians on random smooth specs") {
    std::mt19937_64 rng(45);
    dsl::SpaceDims dims{1, 1, 1};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<dsl::ExprPtr> comps;
        for (int c = 0; c < dims.total(); ++c) {
            // bounded-derivative expressions keep the FD comparison clean
            dsl::ExprPtr e = dsl::mul(dsl::constant(0.5),
                                      dsl::apply_fun(trial % 2 ? dsl::Op::Sin : dsl::Op::Tanh,
                                                     lypmfd::testing::random_expr(rng, dims, 2)));
            comps.push_back(e);
        }
        DslMap map(comps, dims);
        std::uniform_real_distribution<double> unit(-0.9, 0.9);
        for (int pt = 0; pt < 20; ++pt) {
            VectorXd u(3);
            for (int j = 0; j < 3; ++j) u(j) = unit(rng);
            MatrixXd J, Jfd;
            try {
                J = map.jacobian(u);
                Jfd = fd_jacobian(map, u, 1e-5);
            } catch (const NumericError&) {
                continue;
            }
            if (!J.allFinite() || !Jfd.allFinite()) continue;
            if (J.cwiseAbs().maxCoeff() > 1e3) continue;
            REQUIRE((J - Jfd).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, J.cwiseAbs().maxCoeff()));
        }
    }
}
