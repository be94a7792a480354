#include "tcdesc/loss.hpp"

#include "tcdesc/error.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <sstream>

namespace tcdesc {

std::string to_string(const LambdaMode& mode) {
    if (std::holds_alternative<Adaptive>(mode)) return "adaptive";
    if (std::holds_alternative<AdaptiveBatchMean>(mode)) return "adaptive-mean";
    std::ostringstream s;
    s << "fixed:" << std::get<Fixed>(mode).lambda;
    return s.str();
}

LambdaMode parse_lambda_mode(const std::string& text) {
    if (text == "adaptive") return Adaptive{};
    if (text == "adaptive-mean") return AdaptiveBatchMean{};
    const std::string number = text.rfind("fixed:", 0) == 0 ? text.substr(6) : text;
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(number, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != number.size()) {
        throw Error(ErrorCode::InvalidArgument, "bad lambda mode '" + text + "' (adaptive|adaptive-mean|fixed:<v>)");
    }
    if (!(value >= 0.0 && value <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fixed lambda must lie in [0, 1]");
    return Fixed{value};
}

void LossConfig::validate() const {
    if (!(margin > 0.0)) throw Error(ErrorCode::InvalidArgument, "margin must be > 0");
    if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be > 0");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (const auto* fixed = std::get_if<Fixed>(&lambda_mode)) {
        if (!(fixed->lambda >= 0.0 && fixed->lambda <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "fixed lambda must lie in [0, 1]");
        }
    }
    if (const auto* heat = std::get_if<HeatKernel>(&weight_kind); heat && !(heat->t > 0.0)) {
        throw Error(ErrorCode::NonPositiveT, "heat-kernel t must be > 0");
    }
    if (const auto* lc = std::get_if<LinearCombination>(&weight_kind); lc && !(lc->ridge_eps >= 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "ridge_eps must be non-negative");
    }
}

double LossReport::mean_euclidean() const {
    double s = 0.0;
    for (const auto& p : per_pair) s += p.d_euclidean;
    return per_pair.empty() ? 0.0 : s / static_cast<double>(per_pair.size());
}

double LossReport::mean_topology() const {
    double s = 0.0;
    for (const auto& p : per_pair) s += p.d_topology;
    return per_pair.empty() ? 0.0 : s / static_cast<double>(per_pair.size());
}

double LossReport::mean_match_fraction(std::size_t k) const {
    double s = 0.0;
    for (const auto& p : per_pair) s += static_cast<double>(p.matches) / static_cast<double>(k);
    return per_pair.empty() ? 0.0 : s / static_cast<double>(per_pair.size());
}

std::size_t matching_count(const NeighborSet& nb_a, const NeighborSet& nb_p) {
    std::vector<std::size_t> x = nb_a.neighbor_indices;
    std::vector<std::size_t> y = nb_p.neighbor_indices;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::vector<std::size_t> common;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
    return common.size();
}

double adaptive_lambda(std::size_t m, std::size_t k, double gamma) {
    if (k == 0 || m > k) throw Error(ErrorCode::InvalidArgument, "adaptive_lambda needs 0 <= m <= k, k >= 1");
    if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be > 0");
    const double ratio = static_cast<double>(m) / static_cast<double>(k);
    return std::min(std::pow(ratio, gamma), 0.5);
}

double fused_positive_distance(double d_topology, double d_euclidean, double lambda) {
    return lambda * d_topology + (1.0 - lambda) * d_euclidean;
}

HardNegative hardest_negative(const Matrix& cross, std::size_t i) {
    const auto n = static_cast<std::size_t>(cross.rows());
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "hardest_negative needs n >= 2");
    if (i >= n) throw Error(ErrorCode::IndexOutOfBatch, "pair index out of range", i);
    HardNegative best;
    best.distance = std::numeric_limits<double>::infinity();
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto jj = static_cast<Eigen::Index>(j);
        if (cross(ii, jj) < best.distance) best = {j, cross(ii, jj), NegativeDirection::AnchorToPositive};
        if (cross(jj, ii) < best.distance) best = {j, cross(jj, ii), NegativeDirection::PositiveToAnchor};
    }
    return best;
}

HardNegative hardest_negative(const DescriptorBatch& batch, std::size_t i) {
    return hardest_negative(cross_distances(batch.a(), batch.p()), i);
}

LossForward tcdesc_forward(const DescriptorBatch& batch, const LossConfig& cfg) {
    cfg.validate();
    const std::size_t n = batch.n();
    const std::size_t k = cfg.k;
    validate_k(n, batch.d(), k);
    if (!batch.a().allFinite() || !batch.p().allFinite()) {
        throw Error(ErrorCode::Divergence, "non-finite descriptor entries");
    }

    LossForward fwd;
    fwd.dist_a = pairwise_distances(batch.a());
    fwd.dist_p = pairwise_distances(batch.p());
    fwd.cross = cross_distances(batch.a(), batch.p());
    fwd.pairs.reserve(n);
    auto& report = fwd.report;
    report.per_pair.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        PairForward pf;
        pf.nb_a = knn(batch.a(), fwd.dist_a, i, k);
        pf.nb_p = knn(batch.p(), fwd.dist_p, i, k);
        pf.w_a = compute_weights(cfg.weight_kind, batch.a().row(ii).transpose(), pf.nb_a);
        pf.w_p = compute_weights(cfg.weight_kind, batch.p().row(ii).transpose(), pf.nb_p);
        pf.t_a = global_mapping(pf.w_a, pf.nb_a, n);
        pf.t_p = global_mapping(pf.w_p, pf.nb_p, n);

        auto& diag = report.per_pair[i];
        diag.i = i;
        diag.d_euclidean = fwd.cross(ii, ii);
        diag.d_topology = topology_distance(pf.t_a, pf.t_p, k);
        diag.matches = matching_count(pf.nb_a, pf.nb_p);
        diag.negative = hardest_negative(fwd.cross, i);
        fwd.pairs.push_back(std::move(pf));
    }

    if (const auto* fixed = std::get_if<Fixed>(&cfg.lambda_mode)) {
        for (auto& diag : report.per_pair) diag.lambda = fixed->lambda;
    } else {
        double mean = 0.0;
        for (auto& diag : report.per_pair) {
            diag.lambda = adaptive_lambda(diag.matches, k, cfg.gamma);
            mean += diag.lambda;
        }
        mean /= static_cast<double>(n);
        if (std::holds_alternative<AdaptiveBatchMean>(cfg.lambda_mode)) {
            for (auto& diag : report.per_pair) diag.lambda = mean;
        }
    }

    double total = 0.0;
    for (auto& diag : report.per_pair) {
        diag.d_positive = fused_positive_distance(diag.d_topology, diag.d_euclidean, diag.lambda);
        diag.hinge_argument = cfg.margin + diag.d_positive - diag.negative.distance;
        diag.hinge_active = diag.hinge_argument > 0.0;
        if (diag.hinge_active) total += diag.hinge_argument;
    }
    report.loss = total / static_cast<double>(n);
    return fwd;
}

LossReport tcdesc_loss(const DescriptorBatch& batch, const LossConfig& cfg) {
    return tcdesc_forward(batch, cfg).report;
}

}  // namespace tcdesc
