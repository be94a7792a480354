#include "oracles.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <utility>

namespace oracle {

namespace {

double dist(const Matrix& x, std::size_t i, std::size_t j) {
    return (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
}

double dist(const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
    return (x.row(static_cast<Eigen::Index>(i)) - y.row(static_cast<Eigen::Index>(j))).norm();
}

}  // namespace

std::vector<std::size_t> knn(const Matrix& x, std::size_t i, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < static_cast<std::size_t>(x.rows()); ++j) {
        if (j != i) all.emplace_back(dist(x, i, j), j);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < k; ++j) out.push_back(all[j].second);
    return out;
}

Vector least_squares(const tcdesc::ColMatrix& n, const Vector& a, double ridge) {
    const auto d = n.rows();
    const auto k = n.cols();
    tcdesc::ColMatrix aug = tcdesc::ColMatrix::Zero(d + k, k);
    aug.topRows(d) = n;
    aug.bottomRows(k).diagonal().setConstant(std::sqrt(ridge));
    Vector rhs = Vector::Zero(d + k);
    rhs.head(d) = a;
    return aug.householderQr().solve(rhs);
}

Vector weights(const tcdesc::WeightKind& kind, const Matrix& x, std::size_t i, const std::vector<std::size_t>& nb) {
    const auto k = static_cast<Eigen::Index>(nb.size());
    Vector w(k);
    if (std::holds_alternative<tcdesc::Hard>(kind)) return Vector::Ones(k);
    if (const auto* lc = std::get_if<tcdesc::LinearCombination>(&kind)) {
        tcdesc::ColMatrix n(x.cols(), k);
        for (Eigen::Index j = 0; j < k; ++j) n.col(j) = x.row(static_cast<Eigen::Index>(nb[j])).transpose();
        return least_squares(n, x.row(static_cast<Eigen::Index>(i)).transpose(), lc->ridge_eps);
    }
    const double t = std::holds_alternative<tcdesc::HardProxy>(kind) ? 1000.0 : std::get<tcdesc::HeatKernel>(kind).t;
    for (Eigen::Index j = 0; j < k; ++j) w(j) = std::exp(-dist(x, i, nb[j]) / t);
    return w;
}

Vector dense_topology(const tcdesc::WeightKind& kind, const Matrix& x, std::size_t i, std::size_t k) {
    const auto nb = knn(x, i, k);
    const auto w = weights(kind, x, i, nb);
    Vector t = Vector::Zero(x.rows());
    for (std::size_t j = 0; j < k; ++j) t(static_cast<Eigen::Index>(nb[j])) = w(static_cast<Eigen::Index>(j));
    return t;
}

double topology_distance(const Matrix& a, const Matrix& p, std::size_t i, std::size_t k, const tcdesc::WeightKind& kind) {
    const Vector ta = dense_topology(kind, a, i, k);
    const Vector tp = dense_topology(kind, p, i, k);
    double sum = 0.0;
    for (Eigen::Index j = 0; j < ta.size(); ++j) sum += std::abs(ta(j) - tp(j));
    return sum / static_cast<double>(k);
}

std::size_t matches(const Matrix& a, const Matrix& p, std::size_t i, std::size_t k) {
    const auto na = knn(a, i, k);
    const auto np = knn(p, i, k);
    const std::set<std::size_t> sa(na.begin(), na.end());
    std::size_t m = 0;
    for (auto j : np) m += sa.count(j);
    return m;
}

double adaptive_lambda(std::size_t m, std::size_t k, double gamma) {
    return std::min(std::pow(static_cast<double>(m) / static_cast<double>(k), gamma), 0.5);
}

double loss(const Matrix& a, const Matrix& p, const tcdesc::LossConfig& cfg) {
    const auto n = static_cast<std::size_t>(a.rows());
    std::vector<double> lambda(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (const auto* fixed = std::get_if<tcdesc::Fixed>(&cfg.lambda_mode)) {
            lambda[i] = fixed->lambda;
        } else {
            lambda[i] = adaptive_lambda(matches(a, p, i, cfg.k), cfg.k, cfg.gamma);
        }
    }
    if (std::holds_alternative<tcdesc::AdaptiveBatchMean>(cfg.lambda_mode)) {
        double mean = 0.0;
        for (double l : lambda) mean += l;
        mean /= static_cast<double>(n);
        std::fill(lambda.begin(), lambda.end(), mean);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double de = dist(a, i, p, i);
        const double dt = topology_distance(a, p, i, cfg.k, cfg.weight_kind);
        const double dpos = lambda[i] * dt + (1.0 - lambda[i]) * de;
        double dneg = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dneg = std::min({dneg, dist(a, i, p, j), dist(a, j, p, i)});
        }
        total += std::max(0.0, cfg.margin + dpos - dneg);
    }
    return total / static_cast<double>(n);
}

Matrix gaussian(std::size_t rows, std::size_t cols, tcdesc::Rng& rng, bool unit) {
    Matrix x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
        if (unit) x.row(i).normalize();
    }
    return x;
}

Matrix perturbed(const Matrix& a, double noise, tcdesc::Rng& rng) {
    Matrix p = a;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        for (Eigen::Index j = 0; j < p.cols(); ++j) p(i, j) += noise * rng.normal();
        p.row(i).normalize();
    }
    return p;
}

tcdesc::ColMatrix orthogonal(std::size_t d, tcdesc::Rng& rng) {
    tcdesc::ColMatrix g(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
        for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
    }
    return g.householderQr().householderQ();
}

}  // namespace oracle
