#include "tcdesc/descriptor.hpp"

#include "tcdesc/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>

namespace tcdesc {

namespace {

void check_same_shape(const Matrix& a, const Matrix& p) {
    if (a.rows() != p.rows() || a.cols() != p.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "A and P must have identical shapes");
    }
    if (a.rows() < 2 || a.cols() < 2) {
        throw Error(ErrorCode::ShapeMismatch, "a batch needs n >= 2 and d >= 2");
    }
}

// Candidate order: ascending distance, then ascending index.
std::vector<std::size_t> ranked_candidates(const DistanceMatrix& dist, std::size_t i) {
    const std::size_t n = dist.size();
    std::vector<std::size_t> order;
    order.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const double dx = dist(i, x);
        const double dy = dist(i, y);
        return dx < dy || (dx == dy && x < y);
    });
    return order;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> bytes{};
    for (int b = 0; b < 4; ++b) bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
    out.write(bytes.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> bytes{};
    in.read(reinterpret_cast<char*>(bytes.data()), 4);
    if (!in) throw Error(ErrorCode::Io, "truncated descriptor file header");
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
    return v;
}

void put_block(std::ostream& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(r, c))));
        }
    }
}

Matrix get_block(std::istream& in, std::uint32_t n, std::uint32_t d) {
    Matrix m(n, d);
    for (std::uint32_t r = 0; r < n; ++r) {
        for (std::uint32_t c = 0; c < d; ++c) {
            std::array<unsigned char, 4> bytes{};
            in.read(reinterpret_cast<char*>(bytes.data()), 4);
            if (!in) throw Error(ErrorCode::Io, "truncated descriptor file payload");
            std::uint32_t v = 0;
            for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
            m(r, c) = static_cast<double>(std::bit_cast<float>(v));
        }
    }
    return m;
}

}  // namespace

Matrix normalize_rows(const Matrix& raw) {
    Matrix out(raw.rows(), raw.cols());
    for (Eigen::Index r = 0; r < raw.rows(); ++r) {
        const double norm = raw.row(r).norm();
        if (!(norm >= kZeroRowThreshold)) {
            throw Error(ErrorCode::ZeroRow, "row " + std::to_string(r) + " has (near-)zero norm", static_cast<std::size_t>(r));
        }
        out.row(r) = raw.row(r) / norm;
    }
    return out;
}

bool rows_unit_norm(const Matrix& m, double tol) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if (std::abs(m.row(r).norm() - 1.0) > tol) return false;
    }
    return true;
}

DescriptorBatch::DescriptorBatch(Matrix a, Matrix p) : a_(std::move(a)), p_(std::move(p)) {}

DescriptorBatch DescriptorBatch::from_raw(const Matrix& raw_a, const Matrix& raw_p) {
    check_same_shape(raw_a, raw_p);
    return DescriptorBatch(normalize_rows(raw_a), normalize_rows(raw_p));
}

DescriptorBatch DescriptorBatch::from_unit(Matrix a, Matrix p) {
    check_same_shape(a, p);
    if (!rows_unit_norm(a) || !rows_unit_norm(p)) {
        throw Error(ErrorCode::NotUnitNorm, "descriptor rows must have norm 1 ± 1e-6");
    }
    return DescriptorBatch(std::move(a), std::move(p));
}

DescriptorBatch DescriptorBatch::unchecked(Matrix a, Matrix p) {
    check_same_shape(a, p);
    return DescriptorBatch(std::move(a), std::move(p));
}

Matrix cross_distances(const Matrix& left, const Matrix& right) {
    const Vector ln = left.rowwise().squaredNorm();
    const Vector rn = right.rowwise().squaredNorm();
    Matrix dots = left * right.transpose();
    for (Eigen::Index i = 0; i < dots.rows(); ++i) {
        for (Eigen::Index j = 0; j < dots.cols(); ++j) {
            dots(i, j) = std::sqrt(std::max(0.0, ln(i) + rn(j) - 2.0 * dots(i, j)));
        }
    }
    return dots;
}

DistanceMatrix pairwise_distances(const Matrix& set) {
    DistanceMatrix out{cross_distances(set, set)};
    const Eigen::Index n = out.values.rows();
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i, i) = 0.0;
        for (Eigen::Index j = i + 1; j < n; ++j) out.values(j, i) = out.values(i, j);
    }
    return out;
}

double euclidean_distance(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& y) {
    return std::sqrt(std::max(0.0, x.squaredNorm() + y.squaredNorm() - 2.0 * x.dot(y)));
}

void validate_k(std::size_t n, std::size_t d, std::size_t k) {
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be at least 1");
    if (k > n - 1) throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds n-1=" + std::to_string(n - 1));
    if (k >= d) throw Error(ErrorCode::KNotLessThanD, "k=" + std::to_string(k) + " must be < d=" + std::to_string(d));
}

NeighborSet knn(const Matrix& set, std::size_t i, std::size_t k) {
    return knn(set, pairwise_distances(set), i, k);
}

NeighborSet knn(const Matrix& set, const DistanceMatrix& dist, std::size_t i, std::size_t k) {
    const auto n = static_cast<std::size_t>(set.rows());
    const auto d = static_cast<std::size_t>(set.cols());
    if (i >= n) throw Error(ErrorCode::IndexOutOfBatch, "center index out of range", i);
    validate_k(n, d, k);

    const auto order = ranked_candidates(dist, i);
    NeighborSet nb;
    nb.center_index = i;
    nb.neighbor_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
    nb.neighbor_matrix.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(k));
    nb.distances.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto idx = nb.neighbor_indices[j];
        nb.neighbor_matrix.col(static_cast<Eigen::Index>(j)) = set.row(static_cast<Eigen::Index>(idx)).transpose();
        nb.distances[j] = dist(i, idx);
    }
    return nb;
}

double knn_boundary_gap(const DistanceMatrix& dist, std::size_t i, std::size_t k) {
    const std::size_t n = dist.size();
    if (k >= n - 1) return std::numeric_limits<double>::infinity();
    const auto order = ranked_candidates(dist, i);
    return dist(i, order[k]) - dist(i, order[k - 1]);
}

void write_descriptor_file(const std::filesystem::path& path, const Matrix& a, const Matrix& p) {
    if (a.rows() != p.rows() || a.cols() != p.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "A and P must have identical shapes");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write("TCD1", 4);
    put_u32(out, static_cast<std::uint32_t>(a.rows()));
    put_u32(out, static_cast<std::uint32_t>(a.cols()));
    put_block(out, a);
    put_block(out, p);
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

RawDescriptorPair read_descriptor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string_view(magic.data(), 4) != "TCD1") {
        throw Error(ErrorCode::Io, path.string() + " is not a TCD1 descriptor file");
    }
    const auto n = get_u32(in);
    const auto d = get_u32(in);
    RawDescriptorPair out;
    out.a = get_block(in, n, d);
    out.p = get_block(in, n, d);
    return out;
}

}  // namespace tcdesc
