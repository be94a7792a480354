#include "tcdesc/topology.hpp"

#include "tcdesc/error.hpp"

#include <algorithm>
#include <cmath>

namespace tcdesc {

Vector TopologyVector::dense() const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(length));
    for (const auto& [j, value] : entries) out(static_cast<Eigen::Index>(j)) = value;
    return out;
}

TopologyVector global_mapping(const TopologyWeights& weights, const NeighborSet& nb, std::size_t n) {
    if (static_cast<std::size_t>(weights.weights.size()) != nb.k()) {
        throw Error(ErrorCode::LengthMismatch, "weights are not aligned with the neighbor set");
    }
    TopologyVector out;
    out.length = n;
    out.entries.reserve(nb.k());
    for (std::size_t j = 0; j < nb.k(); ++j) {
        const auto idx = nb.neighbor_indices[j];
        if (idx >= n) throw Error(ErrorCode::IndexOutOfBatch, "neighbor index outside the batch", idx);
        out.entries.emplace_back(idx, weights.weights(static_cast<Eigen::Index>(j)));
    }
    std::sort(out.entries.begin(), out.entries.end());
    return out;
}

double topology_distance(const TopologyVector& ta, const TopologyVector& tp, std::size_t k) {
    if (ta.length != tp.length) throw Error(ErrorCode::LengthMismatch, "topology vectors differ in length");
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    double sum = 0.0;
    auto x = ta.entries.begin();
    auto y = tp.entries.begin();
    while (x != ta.entries.end() || y != tp.entries.end()) {
        if (y == tp.entries.end() || (x != ta.entries.end() && x->first < y->first)) {
            sum += std::abs(x->second);
            ++x;
        } else if (x == ta.entries.end() || y->first < x->first) {
            sum += std::abs(y->second);
            ++y;
        } else {
            sum += std::abs(x->second - y->second);
            ++x;
            ++y;
        }
    }
    return sum / static_cast<double>(k);
}

TopologyDistanceReport batch_topology_distance(const DescriptorBatch& batch, std::size_t k, const WeightKind& kind) {
    const std::size_t n = batch.n();
    validate_k(n, batch.d(), k);
    const auto dist_a = pairwise_distances(batch.a());
    const auto dist_p = pairwise_distances(batch.p());

    TopologyDistanceReport report;
    report.per_pair.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto nb_a = knn(batch.a(), dist_a, i, k);
        const auto nb_p = knn(batch.p(), dist_p, i, k);
        const Vector center_a = batch.a().row(static_cast<Eigen::Index>(i)).transpose();
        const Vector center_p = batch.p().row(static_cast<Eigen::Index>(i)).transpose();
        const auto ta = global_mapping(compute_weights(kind, center_a, nb_a), nb_a, n);
        const auto tp = global_mapping(compute_weights(kind, center_p, nb_p), nb_p, n);
        report.per_pair[i] = topology_distance(ta, tp, k);
        total += report.per_pair[i];
    }
    report.mean = total / static_cast<double>(n);
    return report;
}

}  // namespace tcdesc
