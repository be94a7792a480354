#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <vector>

namespace tcdesc {

// Row-major so that each descriptor occupies one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using ColMatrix = Eigen::MatrixXd;

inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kZeroRowThreshold = 1e-12;

// Divides every row by its Euclidean norm. Throws ZeroRow for rows with
// norm below 1e-12.
Matrix normalize_rows(const Matrix& raw);

bool rows_unit_norm(const Matrix& m, double tol = kUnitNormTolerance);

// Two aligned descriptor sets: row i of `a()` and row i of `p()` form the
// matching pair i.
class DescriptorBatch {
public:
    // Normalizes both sets.
    static DescriptorBatch from_raw(const Matrix& raw_a, const Matrix& raw_p);
    // Requires every row to be unit length already.
    static DescriptorBatch from_unit(Matrix a, Matrix p);
    // Shape checks only. Used to probe the loss off the unit sphere
    // (finite differences, back-propagation through a normalization layer).
    static DescriptorBatch unchecked(Matrix a, Matrix p);

    const Matrix& a() const noexcept { return a_; }
    const Matrix& p() const noexcept { return p_; }
    Matrix& mutable_a() noexcept { return a_; }
    Matrix& mutable_p() noexcept { return p_; }
    std::size_t n() const noexcept { return static_cast<std::size_t>(a_.rows()); }
    std::size_t d() const noexcept { return static_cast<std::size_t>(a_.cols()); }

private:
    DescriptorBatch(Matrix a, Matrix p);
    Matrix a_;
    Matrix p_;
};

// Symmetric n×n Euclidean distances within one set, exact-zero diagonal.
struct DistanceMatrix {
    Matrix values;

    double operator()(std::size_t i, std::size_t j) const { return values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

// sqrt(max(0, |x|² + |y|² − 2 x·y)); reduces to sqrt(2 − 2 x·y) on the unit
// sphere and stays the true Euclidean distance off it.
DistanceMatrix pairwise_distances(const Matrix& set);

// Same formula between the rows of two different sets (rows of `left` index
// the result rows).
Matrix cross_distances(const Matrix& left, const Matrix& right);

double euclidean_distance(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y);

struct NeighborSet {
    std::size_t center_index = 0;
    // Ascending distance, ties by ascending index.
    std::vector<std::size_t> neighbor_indices;
    // d×k; column j is the descriptor at neighbor_indices[j].
    ColMatrix neighbor_matrix;
    // Distance from the center to each neighbor, aligned with neighbor_indices.
    std::vector<double> distances;

    std::size_t k() const noexcept { return neighbor_indices.size(); }
};

// k nearest rows to row i of `set`, self excluded.
// Throws KTooLarge if k > n−1 and KNotLessThanD if k >= d.
NeighborSet knn(const Matrix& set, std::size_t i, std::size_t k);
// Variant reusing a precomputed distance matrix of `set`.
NeighborSet knn(const Matrix& set, const DistanceMatrix& dist, std::size_t i, std::size_t k);

// Distance gap between the k-th and (k+1)-th nearest candidates of row i;
// infinite when k = n−1. Membership of the kNN set is locally constant
// within this gap.
double knn_boundary_gap(const DistanceMatrix& dist, std::size_t i, std::size_t k);

void validate_k(std::size_t n, std::size_t d, std::size_t k);

// TCD1 descriptor file: "TCD1", u32 n, u32 d, n·d float32 for A then n·d
// float32 for P, all little-endian, row-major.
void write_descriptor_file(const std::filesystem::path& path, const Matrix& a, const Matrix& p);
struct RawDescriptorPair {
    Matrix a;
    Matrix p;
};
RawDescriptorPair read_descriptor_file(const std::filesystem::path& path);

}  // namespace tcdesc
