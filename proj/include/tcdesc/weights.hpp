#pragma once

#include "tcdesc/descriptor.hpp"

#include <string>
#include <variant>

namespace tcdesc {

// Binary membership weight: 1 on every neighbor.
struct Hard {};
// exp(−distance / 1000): smooth stand-in for Hard during training.
struct HardProxy {
    static constexpr double kDivisor = 1000.0;
};
struct HeatKernel {
    double t = 1.0;
};
// Least-squares reconstruction of the center from its neighbors,
// W = (NᵀN + ridge_eps·I)⁻¹ Nᵀ a.
struct LinearCombination {
    double ridge_eps = 1e-6;
};

using WeightKind = std::variant<Hard, HardProxy, HeatKernel, LinearCombination>;

// Accepts "hard", "proxy", "heat" (uses `t`), "heat:<t>", "lc" (uses `ridge`).
WeightKind parse_weight_kind(const std::string& name, double t = 1.0, double ridge = 1e-6);
std::string to_string(const WeightKind& kind);

// The heat-kernel grid {0.1, 0.5, 1.0, 5.0, 10.0}.
inline constexpr double kHeatKernelPresets[] = {0.1, 0.5, 1.0, 5.0, 10.0};

struct TopologyWeights {
    WeightKind kind;
    std::size_t center_index = 0;
    // Aligned with NeighborSet::neighbor_indices. Non-neighbors are implicit zeros.
    Vector weights;
};

TopologyWeights hard_weights(const NeighborSet& nb);
TopologyWeights hard_proxy_weights(const Eigen::VectorXd& center, const NeighborSet& nb);
TopologyWeights heat_kernel_weights(const Eigen::VectorXd& center, const NeighborSet& nb, double t);
// Throws SingularGram when ridge_eps == 0 and the Gram matrix has a
// condition estimate above 1e12.
TopologyWeights linear_combination_weights(const Eigen::VectorXd& center, const NeighborSet& nb, double ridge_eps);

TopologyWeights compute_weights(const WeightKind& kind, const Eigen::VectorXd& center, const NeighborSet& nb);

// Pull-back of an upstream gradient g = ∂L/∂W through the weight function:
// returns ∂L/∂center (d) and ∂L/∂N (d×k, column j belongs to neighbor j).
struct WeightsPullback {
    Vector d_center;
    ColMatrix d_neighbors;
};

WeightsPullback weights_pullback(const WeightKind& kind, const Eigen::VectorXd& center, const NeighborSet& nb,
                                 const TopologyWeights& forward, const Eigen::VectorXd& upstream);

}  // namespace tcdesc
