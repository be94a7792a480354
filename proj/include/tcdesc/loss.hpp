#pragma once

#include "tcdesc/descriptor.hpp"
#include "tcdesc/topology.hpp"
#include "tcdesc/weights.hpp"

#include <string>
#include <variant>
#include <vector>

namespace tcdesc {

// Per-pair λ_i = min((m_i/k)^γ, 0.5).
struct Adaptive {};
// Same law, averaged over the batch and shared by every pair.
struct AdaptiveBatchMean {};
struct Fixed {
    double lambda = 0.0;
};
using LambdaMode = std::variant<Adaptive, AdaptiveBatchMean, Fixed>;

std::string to_string(const LambdaMode& mode);
// "adaptive", "adaptive-mean", "fixed:<λ>" or a bare number (fixed).
LambdaMode parse_lambda_mode(const std::string& text);

// The fixed-λ grid {0.05, 0.1, 0.2, 0.3, 0.4, 0.5}.
inline constexpr double kFixedLambdaGrid[] = {0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
inline constexpr double kGammaGrid[] = {0.5, 1.0, 2.0};
inline constexpr std::size_t kNeighborGrid[] = {16, 32, 64};

struct LossConfig {
    double margin = 1.0;
    std::size_t k = 16;
    double gamma = 1.0;
    WeightKind weight_kind = LinearCombination{};
    LambdaMode lambda_mode = Adaptive{};

    // Throws InvalidArgument on margin <= 0, gamma <= 0 or a fixed λ outside [0, 1].
    void validate() const;
};

enum class NegativeDirection {
    AnchorToPositive,  // ‖a_i − p_j‖
    PositiveToAnchor,  // ‖p_i − a_j‖
};

struct HardNegative {
    std::size_t index = 0;
    double distance = 0.0;
    NegativeDirection direction = NegativeDirection::AnchorToPositive;
};

struct PairDiagnostics {
    std::size_t i = 0;
    double d_euclidean = 0.0;
    double d_topology = 0.0;
    double lambda = 0.0;
    std::size_t matches = 0;
    double d_positive = 0.0;
    HardNegative negative;
    // margin + d⁺ − d⁻, before clamping at 0.
    double hinge_argument = 0.0;
    bool hinge_active = false;
};

struct LossReport {
    double loss = 0.0;
    std::vector<PairDiagnostics> per_pair;

    double mean_euclidean() const;
    double mean_topology() const;
    double mean_match_fraction(std::size_t k) const;
};

// Number of indices j present in both neighbor sets, i.e. matching pairs
// (a_j, p_j) that are neighbors on both sides.
std::size_t matching_count(const NeighborSet& nb_a, const NeighborSet& nb_p);

double adaptive_lambda(std::size_t m, std::size_t k, double gamma);

double fused_positive_distance(double d_topology, double d_euclidean, double lambda);

// Hardest in-batch negative for pair i over both cross-set directions.
// `cross` holds ‖a_r − p_c‖ at (r, c). Ties go to the smaller index, then to
// the anchor-to-positive direction.
HardNegative hardest_negative(const Matrix& cross, std::size_t i);
HardNegative hardest_negative(const DescriptorBatch& batch, std::size_t i);

// Everything the forward pass builds, retained for back-propagation.
struct PairForward {
    NeighborSet nb_a;
    NeighborSet nb_p;
    TopologyWeights w_a;
    TopologyWeights w_p;
    TopologyVector t_a;
    TopologyVector t_p;
};

struct LossForward {
    LossReport report;
    std::vector<PairForward> pairs;
    DistanceMatrix dist_a;
    DistanceMatrix dist_p;
    Matrix cross;
};

LossForward tcdesc_forward(const DescriptorBatch& batch, const LossConfig& cfg);
LossReport tcdesc_loss(const DescriptorBatch& batch, const LossConfig& cfg);

}  // namespace tcdesc
