#include <doctest.h>

#include <random>

#include "coot/exact_ot.hpp"
#include "coot/ot.hpp"
#include "oracles.hpp"

using namespace coot;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo = 0.0,
                              double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

CostMatrix random_cost(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    CostMatrix C;
    C.values = random_matrix(rows, cols, rng);
    return C;
}

Measure random_measure(Eigen::Index n, Rng& rng) {
    std::uniform_real_distribution<double> dist(0.1, 1.0);
    Measure m;
    m.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) m.weights(i) = dist(rng);
    m.weights /= m.weights.sum();
    return m;
}

} // namespace

TEST_CASE("cost_matrix hand values") {
    Eigen::MatrixXd X(2, 1), Y(2, 1);
    X << 0.0, 1.0;
    Y << 0.0, 2.0;
    const CostMatrix C = cost_matrix(X, Y);
    CHECK(C.values(0, 0) == 0.0);
    CHECK(C.values(0, 1) == 4.0);
    CHECK(C.values(1, 0) == 1.0);
    CHECK(C.values(1, 1) == 1.0);

    Eigen::MatrixXd P(1, 2);
    P << 3.0, 4.0;
    CHECK(cost_matrix(P, P).values(0, 0) == 0.0);
}

TEST_CASE("cost_matrix matches the double-loop oracle") {
    Rng rng(7);
    const Eigen::MatrixXd X = random_matrix(5, 3, rng, -2.0, 2.0);
    const Eigen::MatrixXd Y = random_matrix(4, 3, rng, -2.0, 2.0);
    const CostMatrix C = cost_matrix(X, Y);
    for (Eigen::Index i = 0; i < 5; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) {
            CHECK(C.values(i, j) == doctest::Approx(oracles::sq_dist(X.row(i), Y.row(j))).epsilon(1e-12));
        }
    }
}

TEST_CASE("cost_matrix rejects dimension mismatch") {
    CHECK_THROWS_AS(cost_matrix(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 2)), Error);
}

TEST_CASE("sinkhorn on a single point is forced") {
    CostMatrix C;
    C.values.resize(1, 1);
    C.values << 2.75;
    const TransportPlan plan = sinkhorn(C, uniform_measure(1), uniform_measure(1), 5.0);
    CHECK(plan.converged);
    CHECK(plan.coupling(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(regularized_cost(plan, C) == doctest::Approx(2.75).epsilon(1e-12));
}

TEST_CASE("sinkhorn concentrates on the diagonal at large lambda") {
    CostMatrix C;
    C.values.resize(2, 2);
    C.values << 0.0, 1.0, 1.0, 0.0;
    const TransportPlan plan = sinkhorn(C, uniform_measure(2), uniform_measure(2), 50.0);
    REQUIRE(plan.converged);
    const ExactPlan exact = exact_ot_oracle(C, uniform_measure(2), uniform_measure(2));
    CHECK((plan.coupling - exact.coupling).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("sinkhorn cost approaches the exact optimum") {
    Rng rng(123);
    const CostMatrix C = random_cost(4, 4, rng);
    const Measure mu = uniform_measure(4), nu = uniform_measure(4);
    const TransportPlan plan = sinkhorn(C, mu, nu, 200.0);
    REQUIRE(plan.converged);
    const ExactPlan exact = exact_ot_oracle(C, mu, nu);
    CHECK(std::abs(regularized_cost(plan, C) - exact.cost) <= 1e-2);
}

TEST_CASE("sinkhorn marginal feasibility at defaults") {
    Rng rng(99);
    for (int t = 0; t < 10; ++t) {
        const CostMatrix C = random_cost(5, 3, rng);
        const Measure mu = random_measure(5, rng), nu = random_measure(3, rng);
        const TransportPlan plan = sinkhorn(C, mu, nu, 20.0);
        REQUIRE(plan.converged);
        CHECK((plan.coupling.rowwise().sum() - mu.weights).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((plan.coupling.colwise().sum().transpose() - nu.weights).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK(plan.coupling.minCoeff() > 0.0); // entropic smoothing keeps the plan positive
    }
}

TEST_CASE("sinkhorn marginal violation tightens monotonically") {
    Rng rng(5);
    for (int t = 0; t < 5; ++t) {
        const CostMatrix C = random_cost(6, 4, rng);
        const TransportPlan plan = sinkhorn(C, uniform_measure(6), uniform_measure(4), 30.0);
        for (size_t i = 1; i < plan.violation_history.size(); ++i) {
            CHECK(plan.violation_history[i] <= plan.violation_history[i - 1] + 1e-12);
        }
    }
}

TEST_CASE("regularized cost converges to exact as lambda grows") {
    Rng rng(2024);
    const CostMatrix C = random_cost(4, 4, rng);
    const Measure mu = uniform_measure(4), nu = uniform_measure(4);
    const double exact = exact_ot_oracle(C, mu, nu).cost;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double lambda : {1.0, 10.0, 100.0}) {
        const TransportPlan plan = sinkhorn(C, mu, nu, lambda);
        const double gap = std::abs(regularized_cost(plan, C) - exact);
        CHECK(gap <= prev_gap + 1e-12);
        prev_gap = gap;
    }
}

TEST_CASE("sinkhorn transpose symmetry") {
    Rng rng(31);
    const CostMatrix C = random_cost(4, 6, rng);
    const Measure mu = random_measure(4, rng), nu = random_measure(6, rng);
    const TransportPlan fwd = sinkhorn(C, mu, nu, 40.0);
    CostMatrix Ct;
    Ct.values = C.values.transpose();
    const TransportPlan bwd = sinkhorn(Ct, nu, mu, 40.0);
    CHECK((fwd.coupling - bwd.coupling.transpose()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("scaling vectors reproduce the coupling") {
    Rng rng(8);
    const CostMatrix C = random_cost(5, 5, rng);
    const double lambda = 25.0;
    const TransportPlan plan = sinkhorn(C, uniform_measure(5), uniform_measure(5), lambda);
    const Eigen::MatrixXd K = (-lambda * C.values.array()).exp();
    const Eigen::MatrixXd rebuilt = plan.u.asDiagonal() * K * plan.v.asDiagonal();
    CHECK((rebuilt - plan.coupling).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("log-domain mode matches plain scaling") {
    Rng rng(44);
    const CostMatrix C = random_cost(5, 4, rng);
    const Measure mu = random_measure(5, rng), nu = random_measure(4, rng);
    SinkhornOptions plain, logdom;
    plain.mode = SinkhornMode::Scaling;
    logdom.mode = SinkhornMode::LogDomain;
    const TransportPlan a = sinkhorn(C, mu, nu, 35.0, plain);
    const TransportPlan b = sinkhorn(C, mu, nu, 35.0, logdom);
    CHECK((a.coupling - b.coupling).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("auto mode survives lambda that underflows the kernel") {
    CostMatrix C;
    C.values.resize(2, 2);
    C.values << 0.0, 300.0, 300.0, 0.0;
    const TransportPlan plan = sinkhorn(C, uniform_measure(2), uniform_measure(2), 50.0);
    CHECK(plan.converged);
    CHECK(plan.coupling(0, 0) == doctest::Approx(0.5).epsilon(1e-9));

    // A fully underflowed kernel row starves the scaling iteration.
    CostMatrix bad;
    bad.values.resize(2, 2);
    bad.values << 0.0, 300.0, 300.0, 300.0;
    SinkhornOptions forced;
    forced.mode = SinkhornMode::Scaling;
    CHECK_THROWS_WITH_AS(sinkhorn(bad, uniform_measure(2), uniform_measure(2), 50.0, forced),
                         doctest::Contains("log-domain"), Error);
    const TransportPlan rescued = sinkhorn(bad, uniform_measure(2), uniform_measure(2), 50.0);
    CHECK(rescued.converged);
}

TEST_CASE("sinkhorn argument validation") {
    CostMatrix C;
    C.values = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(sinkhorn(C, uniform_measure(2), uniform_measure(3), 10.0), Error);
    CHECK_THROWS_AS(sinkhorn(C, uniform_measure(2), uniform_measure(2), -1.0), Error);
    SinkhornOptions bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(sinkhorn(C, uniform_measure(2), uniform_measure(2), 10.0, bad), Error);
}

TEST_CASE("regularized_cost hand values and oracle") {
    SUBCASE("single entry") {
        TransportPlan plan;
        plan.coupling = Eigen::MatrixXd::Constant(1, 1, 1.0);
        CostMatrix C;
        C.values = Eigen::MatrixXd::Constant(1, 1, 3.5);
        CHECK(regularized_cost(plan, C) == 3.5);
    }
    SUBCASE("diagonal plan, zero diagonal cost") {
        TransportPlan plan;
        plan.coupling.resize(2, 2);
        plan.coupling << 0.5, 0.0, 0.0, 0.5;
        CostMatrix C;
        C.values.resize(2, 2);
        C.values << 0.0, 1.0, 1.0, 0.0;
        CHECK(regularized_cost(plan, C) == 0.0);
    }
    SUBCASE("random 3x3 matches naive summation") {
        Rng rng(15);
        TransportPlan plan;
        plan.coupling = random_matrix(3, 3, rng);
        const CostMatrix C = random_cost(3, 3, rng);
        CHECK(regularized_cost(plan, C) ==
              doctest::Approx(oracles::frobenius(plan.coupling, C.values)).epsilon(1e-12));
    }
    SUBCASE("shape mismatch") {
        TransportPlan plan;
        plan.coupling = Eigen::MatrixXd::Zero(2, 2);
        CostMatrix C;
        C.values = Eigen::MatrixXd::Zero(3, 2);
        CHECK_THROWS_AS(regularized_cost(plan, C), Error);
    }
}

TEST_CASE("entropy values") {
    TransportPlan point;
    point.coupling = Eigen::MatrixXd::Constant(1, 1, 1.0);
    CHECK(entropy(point) == 0.0);

    TransportPlan uniform;
    uniform.coupling = Eigen::MatrixXd::Constant(2, 2, 0.25);
    CHECK(entropy(uniform) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Rng rng(71);
    TransportPlan random_plan;
    random_plan.coupling = random_matrix(3, 4, rng);
    random_plan.coupling /= random_plan.coupling.sum();
    CHECK(entropy(random_plan) == doctest::Approx(oracles::entropy(random_plan.coupling)).epsilon(1e-12));
}

TEST_CASE("exact oracle hand cases") {
    CostMatrix C;
    C.values.resize(2, 2);
    C.values << 0.0, 1.0, 1.0, 0.0;
    const ExactPlan plan = exact_ot_oracle(C, uniform_measure(2), uniform_measure(2));
    CHECK(plan.cost == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(plan.coupling(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(plan.coupling(0, 1) == doctest::Approx(0.0).epsilon(1e-12));

    CostMatrix one;
    one.values = Eigen::MatrixXd::Constant(1, 1, 1.0);
    const ExactPlan single = exact_ot_oracle(one, uniform_measure(1), uniform_measure(1));
    CHECK(single.cost == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(single.coupling(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact oracle agrees with the 2x2 closed form") {
    // With marginals (a, 1-a), (b, 1-b) the polytope is the segment
    // g11 in [max(0, a+b-1), min(a, b)]; the cost is linear in g11, so the
    // optimum sits at whichever endpoint the cost gradient prefers.
    Rng rng(6);
    std::uniform_real_distribution<double> dist(0.05, 0.95);
    for (int t = 0; t < 50; ++t) {
        const double a = dist(rng), b = dist(rng);
        Measure mu, nu;
        mu.weights.resize(2);
        nu.weights.resize(2);
        mu.weights << a, 1.0 - a;
        nu.weights << b, 1.0 - b;
        CostMatrix C;
        C.values = Eigen::MatrixXd::NullaryExpr(2, 2, [&](Eigen::Index, Eigen::Index) {
            return dist(rng);
        });
        const double slope = C.values(0, 0) - C.values(0, 1) - C.values(1, 0) + C.values(1, 1);
        const double lo = std::max(0.0, a + b - 1.0), hi = std::min(a, b);
        const double g11 = slope >= 0.0 ? lo : hi;
        const double expected = C.values(0, 0) * g11 + C.values(0, 1) * (a - g11) +
                                C.values(1, 0) * (b - g11) + C.values(1, 1) * (1.0 - a - b + g11);
        const ExactPlan plan = exact_ot_oracle(C, mu, nu);
        CHECK(plan.cost == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("exact oracle matches permutation enumeration on square uniform instances") {
    Rng rng(29);
    for (Eigen::Index n : {3, 4, 5}) {
        const CostMatrix C = random_cost(n, n, rng);
        const ExactPlan plan = exact_ot_oracle(C, uniform_measure(n), uniform_measure(n));
        CHECK(plan.cost == doctest::Approx(oracles::assignment_by_enumeration(C.values)).epsilon(1e-9));
    }
}

TEST_CASE("exact optimum lower-bounds every sinkhorn plan") {
    Rng rng(57);
    const CostMatrix C = random_cost(5, 5, rng);
    const Measure mu = uniform_measure(5), nu = uniform_measure(5);
    const ExactPlan exact = exact_ot_oracle(C, mu, nu);
    for (double lambda : {2.0, 10.0, 80.0}) {
        const TransportPlan plan = sinkhorn(C, mu, nu, lambda);
        CHECK(exact.cost <= regularized_cost(plan, C) + 1e-9);
    }
}

TEST_CASE("exact oracle rejects instances beyond oracle scale") {
    CostMatrix C;
    C.values = Eigen::MatrixXd::Zero(9, 3);
    CHECK_THROWS_AS(exact_ot_oracle(C, uniform_measure(9), uniform_measure(3)), Error);
}
