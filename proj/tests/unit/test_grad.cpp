#include "tcdesc/grad.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tcdesc;
using testutil::code_of;

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

LossConfig config(std::size_t k, double gamma, WeightKind kind, LambdaMode mode = Adaptive{}) {
    LossConfig cfg;
    cfg.k = k;
    cfg.gamma = gamma;
    cfg.weight_kind = kind;
    cfg.lambda_mode = mode;
    return cfg;
}

// Central differences of the straight-line oracle loss, independent of
// compare_gradient.
GradientBatch oracle_fd(const DescriptorBatch& batch, const LossConfig& cfg, double h) {
    Matrix a = batch.a();
    Matrix p = batch.p();
    GradientBatch out{Matrix::Zero(a.rows(), a.cols()), Matrix::Zero(p.rows(), p.cols())};
    for (Matrix* m : {&a, &p}) {
        Matrix& g = m == &a ? out.d_a : out.d_p;
        for (Eigen::Index r = 0; r < m->rows(); ++r) {
            for (Eigen::Index c = 0; c < m->cols(); ++c) {
                const double saved = (*m)(r, c);
                (*m)(r, c) = saved + h;
                const double up = oracle::loss(a, p, cfg);
                (*m)(r, c) = saved - h;
                const double down = oracle::loss(a, p, cfg);
                (*m)(r, c) = saved;
                g(r, c) = (up - down) / (2 * h);
            }
        }
    }
    return out;
}

double max_rel(const GradientBatch& x, const GradientBatch& y) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < x.d_a.size(); ++i) {
        worst = std::max(worst, relative_deviation(x.d_a.data()[i], y.d_a.data()[i]));
        worst = std::max(worst, relative_deviation(x.d_p.data()[i], y.d_p.data()[i]));
    }
    return worst;
}

const WeightKind kKinds[] = {Hard{}, HardProxy{}, HeatKernel{0.1}, HeatKernel{1.0}, HeatKernel{10.0},
                             LinearCombination{}};

}  // namespace

TEST(RelativeDeviation, FloorAvoidsDivisionByZero) {
    EXPECT_EQ(relative_deviation(0.0, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(relative_deviation(1e-8, 0.0), 1e-2);
    EXPECT_DOUBLE_EQ(relative_deviation(1.0, 0.9), 0.1);
    EXPECT_DOUBLE_EQ(relative_deviation(-2.0, 2.0), 2.0);
}

TEST(CentralDifferences, QuadraticIsExact) {
    std::vector<double> x = {1.0, -2.0, 0.5};
    const std::vector<double> grad = {2.0, -4.0, 1.0};
    const auto dev = compare_to_central_differences(
        x, grad, [&] { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }, 1e-4);
    EXPECT_LT(dev.max_rel, 1e-9);
    EXPECT_EQ(x, (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Gradient, MatchesCentralDifferencesAcrossConfigs) {
    Rng rng(77);
    for (const auto& kind : kKinds) {
        for (double g : kGammaGrid) {
            for (const LambdaMode& mode : {LambdaMode{Adaptive{}}, LambdaMode{AdaptiveBatchMean{}}, LambdaMode{Fixed{0.3}}}) {
                const auto cfg = config(3, g, kind, mode);
                const auto inst = smooth_random_instance(12, 8, cfg, rng, 10 * kStep);
                const auto r = finite_difference_check(inst.batch, cfg, kStep, kTol);
                EXPECT_TRUE(r.passed) << to_string(kind) << " " << g << " " << to_string(mode) << " " << r.describe();
            }
        }
    }
}

TEST(Gradient, MatchesOracleFiniteDifferences) {
    Rng rng(5);
    for (const auto& kind : kKinds) {
        const auto cfg = config(3, 1.0, kind);
        const auto inst = smooth_random_instance(10, 6, cfg, rng, 10 * kStep);
        const auto analytic = loss_gradient(inst.batch, cfg).gradient;
        EXPECT_LT(max_rel(analytic, oracle_fd(inst.batch, cfg, kStep)), kTol) << to_string(kind);
    }
}

TEST(Gradient, OffSphereBatchStillDifferentiable) {
    Rng rng(8);
    const auto cfg = config(3, 1.0, LinearCombination{});
    const auto inst = smooth_random_instance(12, 8, cfg, rng, 10 * kStep);
    const auto scaled = DescriptorBatch::unchecked(1.3 * inst.batch.a(), 0.8 * inst.batch.p());
    ASSERT_GT(smoothness(scaled, cfg).min(), 10 * kStep);
    EXPECT_TRUE(compare_gradient(scaled, cfg, loss_gradient(scaled, cfg).gradient, kStep, kTol).passed);
}

TEST(Gradient, FixedZeroBitIdenticalAcrossNeighborhoods) {
    Rng rng(13);
    const Matrix a = oracle::gaussian(24, 12, rng);
    const auto batch = DescriptorBatch::from_unit(a, oracle::perturbed(a, 0.4, rng));
    const auto ref = loss_gradient(batch, config(2, 1.0, Hard{}, Fixed{0.0}), DegeneracyPolicy::Permissive);
    for (std::size_t k : {3, 5, 8}) {
        for (const auto& kind : kKinds) {
            const auto lg = loss_gradient(batch, config(k, 2.0, kind, Fixed{0.0}), DegeneracyPolicy::Permissive);
            EXPECT_EQ(lg.report.loss, ref.report.loss);
            EXPECT_TRUE((lg.gradient.d_a.array() == ref.gradient.d_a.array()).all()) << k << " " << to_string(kind);
            EXPECT_TRUE((lg.gradient.d_p.array() == ref.gradient.d_p.array()).all()) << k << " " << to_string(kind);
        }
    }
}

TEST(Gradient, InactiveHingesGiveZeroGradient) {
    // Far-apart pairs and a tiny margin: every hinge is inactive.
    const Matrix eye = Matrix::Identity(4, 4);
    auto cfg = config(1, 1.0, HeatKernel{1.0});
    cfg.margin = 0.1;
    const auto lg = loss_gradient(DescriptorBatch::from_unit(eye, eye), cfg, DegeneracyPolicy::Permissive);
    EXPECT_EQ(lg.report.loss, 0.0);
    EXPECT_EQ(lg.gradient.d_a.norm(), 0.0);
    EXPECT_EQ(lg.gradient.d_p.norm(), 0.0);
}

TEST(Gradient, StrictPolicyDetectsDegeneracies) {
    // Identity rows: every neighbor distance ties.
    const Matrix eye = Matrix::Identity(4, 4);
    const auto batch = DescriptorBatch::from_unit(eye, eye);
    const auto cfg = config(1, 1.0, Hard{});
    EXPECT_EQ(code_of([&] { loss_gradient(batch, cfg); }), ErrorCode::TieDetected);
    EXPECT_NO_THROW(loss_gradient(batch, cfg, DegeneracyPolicy::Permissive));
}

TEST(Gradient, StrictPolicyDetectsHingeBoundary) {
    Rng rng(2);
    auto cfg = config(3, 1.0, LinearCombination{});
    const auto inst = smooth_random_instance(12, 8, cfg, rng, 1e-3);
    const auto report = tcdesc_loss(inst.batch, cfg);
    // Put the pair with the widest negative gap exactly on the boundary.
    double margin = 0.0;
    for (const auto& p : report.per_pair) margin = std::max(margin, p.negative.distance - p.d_positive);
    ASSERT_GT(margin, 0.0);
    cfg.margin = margin;
    EXPECT_EQ(code_of([&] { loss_gradient(inst.batch, cfg); }), ErrorCode::HingeBoundary);
}

TEST(FaultInjection, PerturbedCoordinateIsLocated) {
    Rng rng(31);
    const auto cfg = config(3, 1.0, LinearCombination{});
    const auto inst = smooth_random_instance(12, 8, cfg, rng, 10 * kStep);
    auto analytic = loss_gradient(inst.batch, cfg).gradient;
    ASSERT_TRUE(compare_gradient(inst.batch, cfg, analytic, kStep, kTol).passed);

    analytic.d_p(5, 3) += 1e-2;
    const auto r = compare_gradient(inst.batch, cfg, analytic, kStep, kTol);
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.set, 'p');
    EXPECT_EQ(r.row, 5u);
    EXPECT_EQ(r.col, 3u);
}

TEST(FaultInjection, DroppedTopologyTermIsCaught) {
    // Analytic gradient of the Euclidean-only loss against the full loss.
    Rng rng(17);
    for (const auto& kind : {WeightKind{HeatKernel{0.1}}, WeightKind{LinearCombination{}}}) {
        const auto cfg = config(3, 0.5, kind);
        const auto inst = smooth_random_instance(12, 8, cfg, rng, 10 * kStep);
        auto stripped = cfg;
        stripped.lambda_mode = Fixed{0.0};
        const auto wrong = loss_gradient(inst.batch, stripped).gradient;
        EXPECT_FALSE(compare_gradient(inst.batch, cfg, wrong, kStep, kTol).passed) << to_string(kind);
    }
}

TEST(FaultInjection, CheckThrowsWithFlatIndex) {
    Rng rng(3);
    const auto cfg = config(3, 1.0, HeatKernel{1.0});
    const auto inst = smooth_random_instance(12, 8, cfg, rng, 10 * kStep);
    EXPECT_NO_THROW(finite_difference_check(inst.batch, cfg, kStep, kTol));
    EXPECT_EQ(code_of([&] { finite_difference_check(inst.batch, cfg, kStep, 0.0); }), ErrorCode::ToleranceExceeded);
}

TEST(Smoothness, RandomInstancesHonorGap) {
    Rng rng(1);
    const auto cfg = config(3, 1.0, LinearCombination{});
    for (int i = 0; i < 5; ++i) {
        const auto inst = smooth_random_instance(12, 8, cfg, rng, 1e-4);
        EXPECT_GE(inst.gaps.min(), 1e-4);
        EXPECT_GE(inst.draws, 1u);
        EXPECT_TRUE(rows_unit_norm(inst.batch.a()));
    }
    EXPECT_EQ(code_of([&] { smooth_random_instance(12, 8, cfg, rng, 10.0, 3); }), ErrorCode::InvalidArgument);
}

TEST(Smoothness, TiesHaveZeroGap) {
    const Matrix eye = Matrix::Identity(4, 4);
    EXPECT_EQ(smoothness(DescriptorBatch::from_unit(eye, eye), config(1, 1.0, Hard{})).knn_gap, 0.0);
}
