#include "tcdesc/grad.hpp"

#include "tcdesc/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace tcdesc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

std::size_t position_of(const NeighborSet& nb, std::size_t index) {
    const auto it = std::find(nb.neighbor_indices.begin(), nb.neighbor_indices.end(), index);
    return static_cast<std::size_t>(it - nb.neighbor_indices.begin());
}

// Walks the union of the two sorted supports. `on_entry` receives the
// position in each neighbor list (or k when absent) and both values.
template <class F>
void for_each_union_entry(const PairForward& pf, F&& on_entry) {
    const std::size_t absent = pf.nb_a.k();
    auto x = pf.t_a.entries.begin();
    auto y = pf.t_p.entries.begin();
    while (x != pf.t_a.entries.end() || y != pf.t_p.entries.end()) {
        if (y == pf.t_p.entries.end() || (x != pf.t_a.entries.end() && x->first < y->first)) {
            on_entry(position_of(pf.nb_a, x->first), absent, x->second, 0.0);
            ++x;
        } else if (x == pf.t_a.entries.end() || y->first < x->first) {
            on_entry(absent, position_of(pf.nb_p, y->first), 0.0, y->second);
            ++y;
        } else {
            on_entry(position_of(pf.nb_a, x->first), position_of(pf.nb_p, y->first), x->second, y->second);
            ++x;
            ++y;
        }
    }
}

// ∂d_T/∂W for both sides; l1 subgradient 0 at exact zeros.
void topology_upstream(const PairForward& pf, std::size_t k, Vector& ga, Vector& gp) {
    const auto kk = static_cast<Eigen::Index>(k);
    ga = Vector::Zero(kk);
    gp = Vector::Zero(kk);
    const double inv_k = 1.0 / static_cast<double>(k);
    for_each_union_entry(pf, [&](std::size_t pa, std::size_t pp, double va, double vp) {
        const double s = sign(va - vp) * inv_k;
        if (pa < k) ga(static_cast<Eigen::Index>(pa)) += s;
        if (pp < k) gp(static_cast<Eigen::Index>(pp)) -= s;
    });
}

void scatter(Matrix& grad, const NeighborSet& nb, const WeightsPullback& pull) {
    grad.row(static_cast<Eigen::Index>(nb.center_index)) += pull.d_center.transpose();
    for (std::size_t j = 0; j < nb.k(); ++j) {
        grad.row(static_cast<Eigen::Index>(nb.neighbor_indices[j])) +=
            pull.d_neighbors.col(static_cast<Eigen::Index>(j)).transpose();
    }
}

double min_knn_gap(const LossForward& fwd, std::size_t k) {
    double gap = kInf;
    for (std::size_t i = 0; i < fwd.dist_a.size(); ++i) {
        gap = std::min({gap, knn_boundary_gap(fwd.dist_a, i, k), knn_boundary_gap(fwd.dist_p, i, k)});
    }
    return gap;
}

double negative_gap(const Matrix& cross, std::size_t i) {
    const auto n = static_cast<std::size_t>(cross.rows());
    const auto ii = static_cast<Eigen::Index>(i);
    double best = kInf;
    double second = kInf;
    auto offer = [&](double v) {
        if (v < best) {
            second = best;
            best = v;
        } else if (v < second) {
            second = v;
        }
    };
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        offer(cross(ii, jj));
        offer(cross(jj, ii));
    }
    return second - best;
}

double min_negative_gap(const LossForward& fwd) {
    double gap = kInf;
    for (const auto& diag : fwd.report.per_pair) {
        if (diag.hinge_active) gap = std::min(gap, negative_gap(fwd.cross, diag.i));
    }
    return gap;
}

double min_hinge_gap(const LossForward& fwd) {
    double gap = kInf;
    for (const auto& diag : fwd.report.per_pair) gap = std::min(gap, std::abs(diag.hinge_argument));
    return gap;
}

// Largest single-coordinate sensitivity of weight j of one center.
double weight_sensitivity(const WeightKind& kind, const Vector& center, const NeighborSet& nb,
                          const TopologyWeights& w, std::size_t j) {
    if (std::holds_alternative<Hard>(kind)) return 0.0;
    Vector unit = Vector::Zero(static_cast<Eigen::Index>(nb.k()));
    unit(static_cast<Eigen::Index>(j)) = 1.0;
    const auto pull = weights_pullback(kind, center, nb, w, unit);
    return std::max(pull.d_center.cwiseAbs().maxCoeff(), pull.d_neighbors.cwiseAbs().maxCoeff());
}

}  // namespace

double SmoothnessReport::min() const { return std::min({knn_gap, negative_gap, hinge_gap, kink_gap}); }

SmoothnessReport smoothness(const DescriptorBatch& batch, const LossConfig& cfg) {
    const auto fwd = tcdesc_forward(batch, cfg);
    SmoothnessReport out;
    // A one-coordinate step of size h moves each distance by at most h, so a
    // difference of two distances moves by at most 2h.
    out.knn_gap = 0.5 * min_knn_gap(fwd, cfg.k);
    out.negative_gap = 0.5 * min_negative_gap(fwd);
    out.hinge_gap = min_hinge_gap(fwd);
    out.kink_gap = kInf;
    if (!std::holds_alternative<Hard>(cfg.weight_kind)) {
        for (std::size_t i = 0; i < batch.n(); ++i) {
            const auto& diag = fwd.report.per_pair[i];
            if (!diag.hinge_active || diag.lambda == 0.0) continue;
            const auto& pf = fwd.pairs[i];
            const auto ii = static_cast<Eigen::Index>(i);
            const Vector ca = batch.a().row(ii).transpose();
            const Vector cp = batch.p().row(ii).transpose();
            for_each_union_entry(pf, [&](std::size_t pa, std::size_t pp, double va, double vp) {
                double slope = 0.0;
                if (pa < cfg.k) slope += weight_sensitivity(cfg.weight_kind, ca, pf.nb_a, pf.w_a, pa);
                if (pp < cfg.k) slope += weight_sensitivity(cfg.weight_kind, cp, pf.nb_p, pf.w_p, pp);
                if (slope > 0.0) out.kink_gap = std::min(out.kink_gap, std::abs(va - vp) / slope);
            });
        }
    }
    return out;
}

LossAndGradient loss_gradient(const DescriptorBatch& batch, const LossConfig& cfg, DegeneracyPolicy policy) {
    auto fwd = tcdesc_forward(batch, cfg);
    const std::size_t n = batch.n();
    const std::size_t k = cfg.k;

    if (policy == DegeneracyPolicy::Strict) {
        if (min_knn_gap(fwd, k) < kDegeneracyTolerance) {
            throw Error(ErrorCode::TieDetected, "kNN distance tie at the neighborhood boundary");
        }
        if (min_negative_gap(fwd) < kDegeneracyTolerance) {
            throw Error(ErrorCode::TieDetected, "tie between hardest-negative candidates");
        }
        for (const auto& diag : fwd.report.per_pair) {
            if (std::abs(diag.hinge_argument) < kDegeneracyTolerance) {
                throw Error(ErrorCode::HingeBoundary, "hinge argument within 1e-9 of zero", diag.i);
            }
        }
    }

    LossAndGradient out;
    out.gradient.d_a = Matrix::Zero(batch.a().rows(), batch.a().cols());
    out.gradient.d_p = Matrix::Zero(batch.p().rows(), batch.p().cols());
    auto& ga_total = out.gradient.d_a;
    auto& gp_total = out.gradient.d_p;
    const double coef = 1.0 / static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& diag = fwd.report.per_pair[i];
        if (!diag.hinge_active) continue;
        const auto ii = static_cast<Eigen::Index>(i);

        // Euclidean positive term, weight (1 − λ_i).
        if (diag.d_euclidean > 0.0) {
            const Eigen::RowVectorXd u = (batch.a().row(ii) - batch.p().row(ii)) / diag.d_euclidean;
            const double w = coef * (1.0 - diag.lambda);
            ga_total.row(ii) += w * u;
            gp_total.row(ii) -= w * u;
        }

        // Hardest negative, weight −1.
        const auto jj = static_cast<Eigen::Index>(diag.negative.index);
        if (diag.negative.distance > 0.0) {
            if (diag.negative.direction == NegativeDirection::AnchorToPositive) {
                const Eigen::RowVectorXd u = (batch.a().row(ii) - batch.p().row(jj)) / diag.negative.distance;
                ga_total.row(ii) -= coef * u;
                gp_total.row(jj) += coef * u;
            } else {
                const Eigen::RowVectorXd u = (batch.p().row(ii) - batch.a().row(jj)) / diag.negative.distance;
                gp_total.row(ii) -= coef * u;
                ga_total.row(jj) += coef * u;
            }
        }

        // Topology term, weight λ_i.
        if (diag.lambda != 0.0 && !std::holds_alternative<Hard>(cfg.weight_kind)) {
            const auto& pf = fwd.pairs[i];
            Vector ga;
            Vector gp;
            topology_upstream(pf, k, ga, gp);
            ga *= coef * diag.lambda;
            gp *= coef * diag.lambda;
            const Vector ca = batch.a().row(ii).transpose();
            const Vector cp = batch.p().row(ii).transpose();
            scatter(ga_total, pf.nb_a, weights_pullback(cfg.weight_kind, ca, pf.nb_a, pf.w_a, ga));
            scatter(gp_total, pf.nb_p, weights_pullback(cfg.weight_kind, cp, pf.nb_p, pf.w_p, gp));
        }
    }

    out.report = std::move(fwd.report);
    return out;
}

SmoothInstance smooth_random_instance(std::size_t n, std::size_t d, const LossConfig& cfg, Rng& rng, double min_gap,
                                      std::size_t max_draws) {
    validate_k(n, d, cfg.k);
    const auto rows = static_cast<Eigen::Index>(n);
    const auto cols = static_cast<Eigen::Index>(d);
    Matrix a(rows, cols);
    Matrix p(rows, cols);
    for (std::size_t draw = 1; draw <= max_draws; ++draw) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            for (Eigen::Index j = 0; j < cols; ++j) {
                a(i, j) = rng.normal();
                p(i, j) = a(i, j) + 0.5 * rng.normal();
            }
        }
        auto batch = DescriptorBatch::from_raw(a, p);
        const auto gaps = smoothness(batch, cfg);
        if (gaps.min() >= min_gap) return {std::move(batch), gaps, draw};
    }
    throw Error(ErrorCode::InvalidArgument, "no instance met the smoothness gap within the draw limit");
}

double relative_deviation(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeFloor});
    return std::abs(analytic - numeric) / denom;
}

Deviation compare_to_central_differences(std::span<double> params, std::span<const double> analytic,
                                         const std::function<double()>& loss, double h) {
    if (params.size() != analytic.size()) {
        throw Error(ErrorCode::LengthMismatch, "analytic gradient does not match the parameter count");
    }
    Deviation dev;
    for (std::size_t c = 0; c < params.size(); ++c) {
        const double saved = params[c];
        params[c] = saved + h;
        const double up = loss();
        params[c] = saved - h;
        const double down = loss();
        params[c] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double abs_dev = std::abs(analytic[c] - numeric);
        const double rel_dev = relative_deviation(analytic[c], numeric);
        dev.max_abs = std::max(dev.max_abs, abs_dev);
        if (rel_dev > dev.max_rel || c == 0) {
            dev.max_rel = rel_dev;
            dev.worst = c;
            dev.analytic_at_worst = analytic[c];
            dev.numeric_at_worst = numeric;
        }
    }
    return dev;
}

std::string FdReport::describe() const {
    std::ostringstream s;
    s << "max_abs=" << max_abs << " max_rel=" << max_rel << " worst=" << set << "[" << row << "][" << col
      << "] analytic=" << analytic << " numeric=" << numeric;
    return s.str();
}

FdReport compare_gradient(const DescriptorBatch& batch, const LossConfig& cfg, const GradientBatch& analytic, double h,
                          double tol) {
    auto probe = DescriptorBatch::unchecked(batch.a(), batch.p());
    const auto loss = [&] { return tcdesc_loss(probe, cfg).loss; };
    const auto size = static_cast<std::size_t>(batch.a().size());
    const auto dev_a = compare_to_central_differences(std::span(probe.mutable_a().data(), size),
                                                      std::span(analytic.d_a.data(), size), loss, h);
    const auto dev_p = compare_to_central_differences(std::span(probe.mutable_p().data(), size),
                                                      std::span(analytic.d_p.data(), size), loss, h);
    const bool worst_is_a = dev_a.max_rel >= dev_p.max_rel;
    const auto& worst = worst_is_a ? dev_a : dev_p;

    FdReport report;
    report.max_abs = std::max(dev_a.max_abs, dev_p.max_abs);
    report.max_rel = worst.max_rel;
    report.passed = report.max_rel <= tol;
    report.set = worst_is_a ? 'a' : 'p';
    report.row = worst.worst / batch.d();
    report.col = worst.worst % batch.d();
    report.analytic = worst.analytic_at_worst;
    report.numeric = worst.numeric_at_worst;
    return report;
}

FdReport finite_difference_check(const DescriptorBatch& batch, const LossConfig& cfg, double h, double tol) {
    const auto analytic = loss_gradient(batch, cfg);
    auto report = compare_gradient(batch, cfg, analytic.gradient, h, tol);
    if (!report.passed) {
        throw Error(ErrorCode::ToleranceExceeded, report.describe(),
                    (report.set == 'a' ? 0 : batch.a().size()) + report.row * batch.d() + report.col);
    }
    return report;
}

}  // namespace tcdesc
