#pragma once

#include "tcdesc/descriptor.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace tcdesc {

struct VerificationSample {
    double distance = 0.0;
    bool is_match = false;
};

// False-positive rate at the threshold τ that recalls 95% of the matches:
// τ is the ceil(0.95·#matches)-th smallest match distance, and non-matches
// with distance <= τ count as false positives. Throws EmptyClass when either
// class is missing.
double fpr95(const std::vector<VerificationSample>& samples);

// Mutual nearest-neighbor matching from `desc_a` to `desc_b`; a match (i, j)
// is correct when ground_truth[i] == j. Returns min(1, correct / budget).
double matching_score(const Matrix& desc_a, const Matrix& desc_b,
                      const std::vector<std::optional<std::size_t>>& ground_truth, std::size_t budget);

struct NeighborhoodReport {
    double mean_match_fraction = 0.0;      // mean m_i / k
    double mean_topology_distance = 0.0;   // linear-combination weights
};

NeighborhoodReport neighborhood_report(const DescriptorBatch& batch, std::size_t k);

struct MetricReport {
    double fpr95 = 0.0;
    double matching_score = 0.0;
    double mean_m_over_k = 0.0;
    double mean_topology_distance = 0.0;
};

// Matches are (a_i, p_i); non-matches are every (a_i, p_j), j != i. The
// matching score uses the identity pairing with a budget of n.
MetricReport evaluate_batch(const DescriptorBatch& batch, std::size_t k);

}  // namespace tcdesc
