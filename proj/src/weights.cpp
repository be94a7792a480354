#include "tcdesc/weights.hpp"

#include "tcdesc/error.hpp"

#include <cmath>
#include <sstream>

namespace tcdesc {

namespace {

constexpr double kMaxGramCondition = 1e12;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Shared by the proxy and the heat kernel: w_j = exp(−|c − n_j| / t).
Vector exp_distance_weights(const Eigen::VectorXd& center, const NeighborSet& nb, double t) {
    Vector w(static_cast<Eigen::Index>(nb.k()));
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        w(j) = std::exp(-(center - nb.neighbor_matrix.col(j)).norm() / t);
    }
    return w;
}

WeightsPullback exp_distance_pullback(const Eigen::VectorXd& center, const NeighborSet& nb, const Vector& w,
                                      const Eigen::VectorXd& upstream, double t) {
    WeightsPullback out{Vector::Zero(center.size()), ColMatrix::Zero(nb.neighbor_matrix.rows(), nb.neighbor_matrix.cols())};
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        const Vector diff = center - nb.neighbor_matrix.col(j);
        const double dist = diff.norm();
        if (dist == 0.0) continue;
        // ∂w_j/∂c = −w_j/t · (c − n_j)/|c − n_j|
        const Vector g = (-upstream(j) * w(j) / (t * dist)) * diff;
        out.d_center += g;
        out.d_neighbors.col(j) -= g;
    }
    return out;
}

Eigen::LLT<ColMatrix> factor_gram(const NeighborSet& nb, double ridge_eps) {
    const auto k = static_cast<Eigen::Index>(nb.k());
    ColMatrix gram = nb.neighbor_matrix.transpose() * nb.neighbor_matrix;
    gram.diagonal().array() += ridge_eps;
    Eigen::LLT<ColMatrix> llt(gram);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::SingularGram, "Gram matrix is not positive definite", nb.center_index);
    }
    if (ridge_eps == 0.0 && k > 0 && llt.rcond() < 1.0 / kMaxGramCondition) {
        throw Error(ErrorCode::SingularGram, "Gram matrix condition estimate exceeds 1e12", nb.center_index);
    }
    return llt;
}

}  // namespace

WeightKind parse_weight_kind(const std::string& name, double t, double ridge) {
    if (name == "hard") return Hard{};
    if (name == "proxy" || name == "hard-proxy") return HardProxy{};
    if (name == "lc") {
        if (ridge < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge must be non-negative");
        return LinearCombination{ridge};
    }
    if (name == "heat" || name.rfind("heat:", 0) == 0) {
        double value = t;
        if (name.size() > 5) {
            try {
                value = std::stod(name.substr(5));
            } catch (const std::exception&) {
                throw Error(ErrorCode::InvalidArgument, "bad heat-kernel t in '" + name + "'");
            }
        }
        if (!(value > 0.0)) throw Error(ErrorCode::NonPositiveT, "heat-kernel t must be > 0");
        return HeatKernel{value};
    }
    throw Error(ErrorCode::InvalidArgument, "unknown weight kind '" + name + "' (hard|proxy|heat|lc)");
}

std::string to_string(const WeightKind& kind) {
    return std::visit(Overloaded{
                          [](const Hard&) { return std::string("hard"); },
                          [](const HardProxy&) { return std::string("proxy"); },
                          [](const HeatKernel& h) {
                              std::ostringstream s;
                              s << "heat:" << h.t;
                              return s.str();
                          },
                          [](const LinearCombination&) { return std::string("lc"); },
                      },
                      kind);
}

TopologyWeights hard_weights(const NeighborSet& nb) {
    return {Hard{}, nb.center_index, Vector::Ones(static_cast<Eigen::Index>(nb.k()))};
}

TopologyWeights hard_proxy_weights(const Eigen::VectorXd& center, const NeighborSet& nb) {
    return {HardProxy{}, nb.center_index, exp_distance_weights(center, nb, HardProxy::kDivisor)};
}

TopologyWeights heat_kernel_weights(const Eigen::VectorXd& center, const NeighborSet& nb, double t) {
    if (!(t > 0.0)) throw Error(ErrorCode::NonPositiveT, "heat-kernel t must be > 0");
    return {HeatKernel{t}, nb.center_index, exp_distance_weights(center, nb, t)};
}

TopologyWeights linear_combination_weights(const Eigen::VectorXd& center, const NeighborSet& nb, double ridge_eps) {
    if (ridge_eps < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge_eps must be non-negative");
    if (nb.k() >= static_cast<std::size_t>(nb.neighbor_matrix.rows())) {
        throw Error(ErrorCode::KNotLessThanD, "linear-combination weights need k < d");
    }
    const auto llt = factor_gram(nb, ridge_eps);
    Vector w = llt.solve(nb.neighbor_matrix.transpose() * center);
    return {LinearCombination{ridge_eps}, nb.center_index, std::move(w)};
}

TopologyWeights compute_weights(const WeightKind& kind, const Eigen::VectorXd& center, const NeighborSet& nb) {
    return std::visit(Overloaded{
                          [&](const Hard&) { return hard_weights(nb); },
                          [&](const HardProxy&) { return hard_proxy_weights(center, nb); },
                          [&](const HeatKernel& h) { return heat_kernel_weights(center, nb, h.t); },
                          [&](const LinearCombination& lc) { return linear_combination_weights(center, nb, lc.ridge_eps); },
                      },
                      kind);
}

WeightsPullback weights_pullback(const WeightKind& kind, const Eigen::VectorXd& center, const NeighborSet& nb,
                                 const TopologyWeights& forward, const Eigen::VectorXd& upstream) {
    return std::visit(
        Overloaded{
            [&](const Hard&) {
                return WeightsPullback{Vector::Zero(center.size()),
                                       ColMatrix::Zero(nb.neighbor_matrix.rows(), nb.neighbor_matrix.cols())};
            },
            [&](const HardProxy&) { return exp_distance_pullback(center, nb, forward.weights, upstream, HardProxy::kDivisor); },
            [&](const HeatKernel& h) { return exp_distance_pullback(center, nb, forward.weights, upstream, h.t); },
            [&](const LinearCombination& lc) {
                // With G = NᵀN + εI and r = a − N W:
                //   dW = G⁻¹ (Nᵀ da + dNᵀ r − Nᵀ dN W)
                // so for u = G⁻¹ g:  ∂L/∂a = N u,  ∂L/∂N = r uᵀ − N u Wᵀ.
                const auto llt = factor_gram(nb, lc.ridge_eps);
                const Vector u = llt.solve(upstream);
                const Vector nu = nb.neighbor_matrix * u;
                const Vector residual = center - nb.neighbor_matrix * forward.weights;
                WeightsPullback out;
                out.d_center = nu;
                out.d_neighbors = residual * u.transpose() - nu * forward.weights.transpose();
                return out;
            },
        },
        kind);
}

}  // namespace tcdesc
