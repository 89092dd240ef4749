#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ivkit/dgp.hpp"
#include "ivkit/iv.hpp"
#include "test_support.hpp"

namespace {

using namespace ivkit;
using ivkit::testing::gaussian;
using ivkit::testing::random_wxy;
using ivkit::testing::relative_gap;

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

TEST(IvEstimate, InstrumentingWithXReproducesOls) {
    std::mt19937_64 gen(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto data = random_wxy(300, 2, 1 + trial % 3, 2, gen);
        const Eigen::MatrixXd x = data.role(Role::X);
        const auto est = iv::iv_estimate(data, x);
        const auto ols = regress::ols(x, data.role(Role::Y));
        EXPECT_EQ(est.method, iv::IvMethod::JustIdentified);
        EXPECT_LT(relative_gap(est.beta, ols.coefficients), 1e-10);
    }
}

TEST(IvEstimate, FigureThreeIsConsistentWhileOlsIsNot) {
    const auto graph = dgp::fig3();
    const auto plims = dgp::analytic_plims(graph, "z", "x", "y");
    EXPECT_NEAR(plims.iv(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(plims.ols(0, 0), 4.0 / 3.0, 1e-12);

    const auto data = center(dgp::simulate(graph, 100000, 2024));
    const auto est = iv::iv_estimate(data, data.role(Role::Z));
    const auto ols = regress::ols(data, {"x"}, {"y"});
    EXPECT_NEAR(est.beta(0, 0), plims.iv(0, 0), 0.05);
    EXPECT_NEAR(ols.coefficients(0, 0), plims.ols(0, 0), 0.02);
}

TEST(IvEstimate, OrthogonalInstrumentIsWeak) {
    std::mt19937_64 gen(2);
    const auto data = random_wxy(500, 1, 1, 1, gen);
    const Eigen::MatrixXd x = data.role(Role::X);
    const Eigen::MatrixXd noise = gaussian(500, 1, gen);
    const Eigen::MatrixXd z = regress::ols(x, noise).residuals;
    try {
        iv::iv_estimate(data, z);
        FAIL() << "expected WeakInstrument";
    } catch (const WeakInstrument& e) {
        EXPECT_EQ(e.rank(), 0);
        EXPECT_EQ(e.code(), "WEAK_INSTRUMENT");
    }
}

TEST(IvEstimate, FewerInstrumentsThanTreatmentsIsUnderidentified) {
    std::mt19937_64 gen(3);
    const auto data = random_wxy(200, 1, 2, 1, gen);
    EXPECT_THROW(iv::iv_estimate(data, data.role(Role::W)), Underidentified);
}

TEST(IvEstimate, TwoStageMatchesJustIdentifiedForm) {
    std::mt19937_64 gen(4);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index px = 1 + trial % 3;
        const Eigen::MatrixXd z = gaussian(150, px, gen);
        const Eigen::MatrixXd x = z * gaussian(px, px, gen) + 0.5 * gaussian(150, px, gen);
        const Eigen::MatrixXd y = x * gaussian(px, 2, gen) + gaussian(150, 2, gen);
        const Eigen::MatrixXd a = iv::two_stage(z, x, y);
        const Eigen::MatrixXd b = iv::just_identified(z, x, y);
        EXPECT_LT(relative_gap(a, b), 1e-8);
    }
}

TEST(IvEstimate, OveridentifiedUsesTwoStageFormula) {
    std::mt19937_64 gen(5);
    const Eigen::MatrixXd z = gaussian(400, 3, gen);
    const Eigen::MatrixXd x = z * gaussian(3, 1, gen) + gaussian(400, 1, gen);
    const Eigen::MatrixXd y = 2.0 * x + gaussian(400, 1, gen);
    const auto est = iv::iv_estimate(z, x, y);
    EXPECT_EQ(est.method, iv::IvMethod::TwoStage);
    const Eigen::MatrixXd pz = z * (z.transpose() * z).inverse() * z.transpose();
    const Eigen::MatrixXd direct = (x.transpose() * pz * x).inverse() * (x.transpose() * pz * y);
    EXPECT_LT(relative_gap(est.beta, direct), 1e-10);
}

TEST(IvEstimate, ConsistencyImprovesWithSampleSize) {
    const auto graph = dgp::fig3();
    std::vector<double> medians;
    for (Eigen::Index n : {1000, 10000, 100000}) {
        std::vector<double> err;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto data = center(dgp::simulate(graph, n, 1000 + seed));
            err.push_back(std::abs(iv::iv_estimate(data, data.role(Role::Z)).beta(0, 0) - 1.0));
        }
        medians.push_back(median(err));
    }
    EXPECT_GE(medians[0], medians[1]);
    EXPECT_GE(medians[1], medians[2]);
}

TEST(CausalEffect, DoOperatorArithmetic) {
    iv::IvEstimate est;
    est.beta = Eigen::MatrixXd::Constant(1, 1, 2.0);
    Eigen::VectorXd a(1), b(1), c(1);
    a << 1.0;
    b << 3.0;
    c << -4.5;
    EXPECT_EQ(iv::causal_effect(est, a, a)(0), 0.0);
    EXPECT_DOUBLE_EQ(iv::causal_effect(est, a, b)(0), 4.0);
    EXPECT_EQ(iv::causal_effect(est, a, c)(0), iv::causal_effect(est, a, b)(0) + iv::causal_effect(est, b, c)(0));
    EXPECT_THROW(iv::causal_effect(est, Eigen::VectorXd::Zero(2), a), ShapeError);
}

TEST(CausalEffect, MultivariateIsLinear) {
    std::mt19937_64 gen(6);
    iv::IvEstimate est;
    est.beta = gaussian(3, 2, gen);
    const Eigen::VectorXd a = gaussian(3, 1, gen), b = gaussian(3, 1, gen), c = gaussian(3, 1, gen);
    const Eigen::VectorXd lhs = iv::causal_effect(est, a, c);
    const Eigen::VectorXd rhs = iv::causal_effect(est, a, b) + iv::causal_effect(est, b, c);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(lhs.size(), 2);
}

TEST(ConstructInstruments, DimensionCountingAndExactness) {
    std::mt19937_64 gen(7);
    const auto data = random_wxy(500, 3, 1, 1, gen);
    const auto set = iv::construct_instruments(data, 3);
    EXPECT_EQ(set.null_dimension, 3);
    EXPECT_THROW(iv::construct_instruments(data, 4), InsufficientCount);
    EXPECT_THROW(iv::construct_instruments(data, 0), ConfigError);

    const Eigen::MatrixXd e = iv::outcome_residuals(data);
    const Eigen::MatrixXd c = iv::candidate_matrix(data);
    const Eigen::MatrixXd x = data.role(Role::X);
    for (Eigen::Index k = 0; k < 3; ++k) {
        EXPECT_NEAR(set.instruments.col(k).norm(), 1.0, 1e-10);
        EXPECT_LT(std::abs(set.instruments.col(k).dot(e.col(0))) / 500.0, 1e-12);
        EXPECT_NEAR(set.relevance(k), std::abs(set.instruments.col(k).dot(x.col(0))), 1e-10);
    }
    EXPECT_LT((c * set.lambda - set.instruments).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((set.instruments.transpose() * set.instruments - Eigen::MatrixXd::Identity(3, 3))
                  .cwiseAbs()
                  .maxCoeff(),
              1e-10);
    EXPECT_GE(set.relevance(0), set.relevance(1));
    EXPECT_GE(set.relevance(1), set.relevance(2));
    EXPECT_LT(set.validity_gap, 1e-12);
    // The constraint G' lambda = 0 holds at sample level.
    const Eigen::MatrixXd g = c.transpose() * e;
    EXPECT_LT((g.transpose() * set.lambda).cwiseAbs().maxCoeff(), 1e-12 * data.role(Role::Y).norm());
}

TEST(ConstructInstruments, LeadingInstrumentBeatsRandomFeasibleDirections) {
    std::mt19937_64 gen(8);
    for (int trial = 0; trial < 10; ++trial) {
        const auto data = random_wxy(300, 3, 1 + trial % 2, 1, gen);
        const auto set = iv::construct_instruments(data, 1);
        const Eigen::MatrixXd c = iv::candidate_matrix(data);
        const Eigen::MatrixXd g = c.transpose() * iv::outcome_residuals(data);
        const Eigen::MatrixXd x = data.role(Role::X);
        // Feasible lambdas by projecting random vectors off span(G).
        const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(g.rows(), g.rows()) -
                                     g * (g.transpose() * g).inverse() * g.transpose();
        for (int draw = 0; draw < 1000; ++draw) {
            Eigen::VectorXd z = c * (proj * gaussian(g.rows(), 1, gen));
            z.normalize();
            EXPECT_LE((z.transpose() * x).norm(), set.relevance(0) * (1.0 + 1e-12));
        }
    }
}

TEST(ConstructInstruments, TreatmentDirectionIsAlwaysFeasible) {
    // x lies in span(w, eta_x) and is orthogonal to e_{y|x}, so the valid space
    // never drops below p_x dimensions, even when p_y >= p_w + p_x.
    std::mt19937_64 gen(9);
    const auto data = random_wxy(300, 1, 1, 2, gen);
    const auto set = iv::construct_instruments(data, 1);
    EXPECT_EQ(set.null_dimension, 1);
    const Eigen::VectorXd x = data.role(Role::X).col(0);
    EXPECT_NEAR(std::abs(set.instruments.col(0).dot(x)) / x.norm(), 1.0, 1e-10);
    EXPECT_THROW(iv::construct_instruments(data, 2), InsufficientCount);
}

TEST(ConstructInstruments, OutputNeverFailsValidityTest) {
    std::mt19937_64 gen(10);
    const auto data = random_wxy(400, 3, 1, 1, gen);
    const auto set = iv::construct_instruments(data, 2);
    const auto verdict = iv::validity_test(data, set.instruments, 0.05, 200, 17);
    EXPECT_TRUE(verdict.valid);
    for (const auto& c : verdict.cells) EXPECT_LT(std::abs(c.statistic), 1e-12);
}

TEST(ValidityTest, PreconditionsAndDecisionRule) {
    std::mt19937_64 gen(11);
    const auto data = random_wxy(300, 2, 1, 1, gen);
    const Eigen::MatrixXd w = data.role(Role::W);
    EXPECT_THROW(iv::validity_test(data, w, 0.05, 99, 1), ConfigError);
    EXPECT_THROW(iv::validity_test(data, w, 0.0, 200, 1), ConfigError);
    EXPECT_THROW(iv::validity_test(data, w, 1.0, 200, 1), ConfigError);
    const auto v = iv::validity_test(data, w, 0.05, 200, 1);
    ASSERT_EQ(v.cells.size(), 2u);
    bool any = false;
    for (const auto& c : v.cells) {
        EXPECT_GE(c.p_value, 0.0);
        EXPECT_LE(c.p_value, 1.0);
        EXPECT_GT(c.standard_error, 0.0);
        any = any || c.p_value < 0.05;
    }
    EXPECT_EQ(v.valid, !any);
}

TEST(ValidityTest, DeterministicGivenSeedAndThreads) {
    std::mt19937_64 gen(12);
    const auto data = random_wxy(300, 2, 1, 1, gen);
    const Eigen::MatrixXd w = data.role(Role::W);
    iv::ValidityOptions one;
    one.threads = 1;
    iv::ValidityOptions four;
    four.threads = 4;
    const auto a = iv::validity_test(data, w, 0.05, 300, 99, one);
    const auto b = iv::validity_test(data, w, 0.05, 300, 99, four);
    ASSERT_EQ(a.cells.size(), b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        EXPECT_EQ(a.cells[i].standard_error, b.cells[i].standard_error);
        EXPECT_EQ(a.cells[i].p_value, b.cells[i].p_value);
    }
}

TEST(ValidityTest, ScaleInvariantVerdict) {
    const auto data = center(dgp::simulate(dgp::fig2(), 2000, 5));
    const Eigen::MatrixXd w = data.role(Role::W);
    const auto a = iv::validity_test(data, w, 0.05, 300, 4);
    const auto b = iv::validity_test(data, 3.5 * w, 0.05, 300, 4);
    EXPECT_NEAR(b.cells[0].statistic, 3.5 * a.cells[0].statistic, 1e-12);
    EXPECT_NEAR(b.cells[0].p_value, a.cells[0].p_value, 1e-12);
    EXPECT_EQ(a.valid, b.valid);
}

TEST(ValidityTest, RankingListsLeastInvalidFirst) {
    iv::ValidityVerdict v;
    v.cells = {{0, 0, 0.4, 1.0, 0.5}, {1, 0, -0.1, 1.0, 0.5}, {2, 0, 0.2, 1.0, 0.5}};
    EXPECT_EQ(iv::invalidity_ranking(v), (std::vector<Eigen::Index>{1, 2, 0}));
}

TEST(NearestValid, AlreadyValidColumnIsUnchanged) {
    std::mt19937_64 gen(13);
    const auto data = random_wxy(200, 2, 1, 1, gen);
    const auto set = iv::construct_instruments(data, 2);
    const auto repair = iv::nearest_valid(data, set.instruments);
    EXPECT_EQ(repair.instruments, set.instruments);
    EXPECT_EQ(repair.deviation.maxCoeff(), 0.0);
}

TEST(NearestValid, MatchesConstrainedLeastSquaresOracle) {
    std::mt19937_64 gen(14);
    for (int trial = 0; trial < 25; ++trial) {
        const Eigen::Index py = 1 + trial % 2;
        const auto data = random_wxy(60, 2, 1, py, gen);
        const Eigen::MatrixXd z = gaussian(60, 2, gen);
        const auto repair = iv::nearest_valid(data, z);
        const Eigen::MatrixXd e = iv::outcome_residuals(data);
        for (Eigen::Index k = 0; k < z.cols(); ++k) {
            const Eigen::VectorXd oracle = ivkit::testing::kkt_projection(z.col(k), e);
            EXPECT_LT((repair.instruments.col(k) - oracle).cwiseAbs().maxCoeff(), 1e-8);
            EXPECT_NEAR(repair.deviation(k), (z.col(k) - oracle).norm(), 1e-8);
        }
        if (py == 1) {
            const Eigen::VectorXd ev = e.col(0);
            const Eigen::MatrixXd closed = z - ev * (ev.transpose() * z) / ev.squaredNorm();
            EXPECT_LT((repair.instruments - closed).cwiseAbs().maxCoeff(), 1e-10);
        }
    }
}

TEST(NearestValid, ZeroResidualLeavesInstrumentsAlone) {
    std::mt19937_64 gen(15);
    const Eigen::MatrixXd w = gaussian(100, 1, gen);
    const Eigen::MatrixXd x = w + gaussian(100, 1, gen);
    const auto data = ivkit::testing::make_wxy(w, x, 2.0 * x);
    const Eigen::MatrixXd z = gaussian(100, 2, gen);
    const auto repair = iv::nearest_valid(data, z);
    EXPECT_EQ(repair.instruments, z);
    EXPECT_EQ(repair.deviation.maxCoeff(), 0.0);
}

TEST(Normality, GaussianColumnsLookNormal) {
    std::mt19937_64 gen(16);
    const auto shapes = iv::normality_diagnostics(gaussian(50000, 2, gen));
    for (const auto& s : shapes) {
        EXPECT_LT(std::abs(s.skewness), 0.05);
        EXPECT_LT(std::abs(s.excess_kurtosis), 0.1);
    }
    Eigen::MatrixXd skewed = gaussian(50000, 1, gen).array().exp().matrix();
    EXPECT_GT(iv::normality_diagnostics(skewed)[0].skewness, 1.0);
}

}  // namespace
