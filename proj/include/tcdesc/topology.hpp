#pragma once

#include "tcdesc/descriptor.hpp"
#include "tcdesc/weights.hpp"

#include <utility>
#include <vector>

namespace tcdesc {

// Length-n vector whose stored support is exactly the k neighbor indices of
// the center, sorted ascending. A stored value may be zero; the support is
// defined by neighbor membership, not by value.
struct TopologyVector {
    std::size_t length = 0;
    std::vector<std::pair<std::size_t, double>> entries;

    Vector dense() const;
};

TopologyVector global_mapping(const TopologyWeights& weights, const NeighborSet& nb, std::size_t n);

// (1/k)·‖ta − tp‖₁ computed by merging the two sorted supports.
double topology_distance(const TopologyVector& ta, const TopologyVector& tp, std::size_t k);

struct TopologyDistanceReport {
    std::vector<double> per_pair;
    double mean = 0.0;
};

// For every pair: kNN of a_i within A and of p_i within P, local weights,
// global mapping, then the l1 topology distance.
TopologyDistanceReport batch_topology_distance(const DescriptorBatch& batch, std::size_t k, const WeightKind& kind);

}  // namespace tcdesc
