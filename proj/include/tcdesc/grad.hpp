#pragma once

#include "tcdesc/descriptor.hpp"
#include "tcdesc/loss.hpp"
#include "tcdesc/random.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace tcdesc {

struct GradientBatch {
    Matrix d_a;
    Matrix d_p;
};

// Tolerance below which a kNN/negative ranking gap counts as a tie and a
// hinge argument counts as sitting on the boundary.
inline constexpr double kDegeneracyTolerance = 1e-9;

enum class DegeneracyPolicy {
    // Raise TieDetected / HingeBoundary at measure-zero points.
    Strict,
    // Return the one-sided gradient anyway (training).
    Permissive,
};

struct LossAndGradient {
    LossReport report;
    GradientBatch gradient;
};

// Gradient of tcdesc_loss w.r.t. every entry of A and P. kNN membership, m_i,
// λ_i and the hardest-negative choice are held constant; weights are
// differentiated through their closed forms.
LossAndGradient loss_gradient(const DescriptorBatch& batch, const LossConfig& cfg,
                              DegeneracyPolicy policy = DegeneracyPolicy::Strict);

// How far (in units of a single-coordinate perturbation) the batch sits from
// each kind of non-smooth point of the loss. Finite differences with step h
// are valid when every gap exceeds h comfortably.
struct SmoothnessReport {
    double knn_gap = 0.0;       // k-th vs (k+1)-th neighbor distance
    double negative_gap = 0.0;  // best vs second-best negative, active pairs
    double hinge_gap = 0.0;     // |margin + d⁺ − d⁻|
    double kink_gap = 0.0;      // l1 kinks of the topology distance, linearized

    double min() const;
};

SmoothnessReport smoothness(const DescriptorBatch& batch, const LossConfig& cfg);

struct SmoothInstance {
    DescriptorBatch batch;
    SmoothnessReport gaps;
    std::size_t draws = 0;
};

// a_i ~ N(0, I), p_i = a_i + 0.5·N(0, I), rows normalized; redrawn until every
// smoothness gap is at least `min_gap`. Throws InvalidArgument after
// `max_draws` rejections.
SmoothInstance smooth_random_instance(std::size_t n, std::size_t d, const LossConfig& cfg, Rng& rng, double min_gap,
                                      std::size_t max_draws = 1000);

// |analytic − numeric| / max(|analytic|, |numeric|, kRelativeFloor).
inline constexpr double kRelativeFloor = 1e-6;
double relative_deviation(double analytic, double numeric);

struct Deviation {
    double max_abs = 0.0;
    double max_rel = 0.0;
    // Flat coordinate with the largest relative deviation.
    std::size_t worst = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Central differences (f(x + h e_c) − f(x − h e_c)) / 2h over every
// coordinate of `params`, compared with `analytic`. `loss` must read the
// current contents of `params`; each coordinate is restored afterwards.
Deviation compare_to_central_differences(std::span<double> params, std::span<const double> analytic,
                                         const std::function<double()>& loss, double h);

struct FdReport {
    double max_abs = 0.0;
    double max_rel = 0.0;
    bool passed = false;
    // Location of the worst coordinate.
    char set = 'a';
    std::size_t row = 0;
    std::size_t col = 0;
    double analytic = 0.0;
    double numeric = 0.0;

    std::string describe() const;
};

// Checks `analytic` against central differences of tcdesc_loss on `batch`.
FdReport compare_gradient(const DescriptorBatch& batch, const LossConfig& cfg, const GradientBatch& analytic, double h,
                          double tol);

// Computes the analytic gradient and checks it; throws ToleranceExceeded
// naming the worst coordinate when max relative deviation exceeds `tol`.
FdReport finite_difference_check(const DescriptorBatch& batch, const LossConfig& cfg, double h, double tol);

}  // namespace tcdesc
