#include "tcdesc/metrics.hpp"

#include "tcdesc/error.hpp"
#include "tcdesc/loss.hpp"
#include "tcdesc/topology.hpp"

#include <algorithm>

namespace tcdesc {

namespace {

// Position of the smallest entry along a row or a column; ties go to the
// smaller index.
std::size_t argmin_row(const Matrix& dist, Eigen::Index row) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < dist.cols(); ++j) {
        if (dist(row, j) < dist(row, best)) best = j;
    }
    return static_cast<std::size_t>(best);
}

std::size_t argmin_col(const Matrix& dist, Eigen::Index col) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < dist.rows(); ++i) {
        if (dist(i, col) < dist(best, col)) best = i;
    }
    return static_cast<std::size_t>(best);
}

}  // namespace

double fpr95(const std::vector<VerificationSample>& samples) {
    std::vector<double> matches;
    std::vector<double> non_matches;
    for (const auto& s : samples) (s.is_match ? matches : non_matches).push_back(s.distance);
    if (matches.empty() || non_matches.empty()) {
        throw Error(ErrorCode::EmptyClass, "fpr95 needs at least one match and one non-match");
    }
    std::sort(matches.begin(), matches.end());
    // ceil(0.95·m) in exact integer arithmetic.
    const std::size_t needed = (95 * matches.size() + 99) / 100;
    const double threshold = matches[needed - 1];
    const auto false_positives = std::count_if(non_matches.begin(), non_matches.end(),
                                               [&](double d) { return d <= threshold; });
    return static_cast<double>(false_positives) / static_cast<double>(non_matches.size());
}

double matching_score(const Matrix& desc_a, const Matrix& desc_b,
                      const std::vector<std::optional<std::size_t>>& ground_truth, std::size_t budget) {
    if (budget < 1) throw Error(ErrorCode::InvalidArgument, "budget must be at least 1");
    if (desc_a.cols() != desc_b.cols()) throw Error(ErrorCode::ShapeMismatch, "descriptor dimensionality differs");
    if (ground_truth.size() != static_cast<std::size_t>(desc_a.rows())) {
        throw Error(ErrorCode::LengthMismatch, "ground truth must have one entry per row of desc_a");
    }
    if (desc_a.rows() == 0 || desc_b.rows() == 0) return 0.0;
    const Matrix dist = cross_distances(desc_a, desc_b);
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < desc_a.rows(); ++i) {
        const std::size_t j = argmin_row(dist, i);
        const bool mutual = argmin_col(dist, static_cast<Eigen::Index>(j)) == static_cast<std::size_t>(i);
        const auto& truth = ground_truth[static_cast<std::size_t>(i)];
        if (mutual && truth && *truth == j) ++correct;
    }
    return std::min(1.0, static_cast<double>(correct) / static_cast<double>(budget));
}

NeighborhoodReport neighborhood_report(const DescriptorBatch& batch, std::size_t k) {
    const std::size_t n = batch.n();
    validate_k(n, batch.d(), k);
    const auto dist_a = pairwise_distances(batch.a());
    const auto dist_p = pairwise_distances(batch.p());
    double fraction = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto m = matching_count(knn(batch.a(), dist_a, i, k), knn(batch.p(), dist_p, i, k));
        fraction += static_cast<double>(m) / static_cast<double>(k);
    }
    NeighborhoodReport out;
    out.mean_match_fraction = fraction / static_cast<double>(n);
    out.mean_topology_distance = batch_topology_distance(batch, k, LinearCombination{}).mean;
    return out;
}

MetricReport evaluate_batch(const DescriptorBatch& batch, std::size_t k) {
    const std::size_t n = batch.n();
    const Matrix cross = cross_distances(batch.a(), batch.p());
    std::vector<VerificationSample> samples;
    samples.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            samples.push_back({cross(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), i == j});
        }
    }
    std::vector<std::optional<std::size_t>> identity(n);
    for (std::size_t i = 0; i < n; ++i) identity[i] = i;

    const auto nb = neighborhood_report(batch, k);
    MetricReport out;
    out.fpr95 = fpr95(samples);
    out.matching_score = matching_score(batch.a(), batch.p(), identity, n);
    out.mean_m_over_k = nb.mean_match_fraction;
    out.mean_topology_distance = nb.mean_topology_distance;
    return out;
}

}  // namespace tcdesc
