#include "tcdesc/descriptor.hpp"
#include "tcdesc/error.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace tcdesc;

using testutil::code_of;
using testutil::temp_file;

TEST(Normalize, RowsBecomeUnitLength) {
    Matrix raw(2, 3);
    raw << 3, 0, 4, 0, -2, 0;
    const Matrix unit = normalize_rows(raw);
    EXPECT_DOUBLE_EQ(unit(0, 0), 0.6);
    EXPECT_DOUBLE_EQ(unit(0, 2), 0.8);
    EXPECT_DOUBLE_EQ(unit(1, 1), -1.0);
    EXPECT_TRUE(rows_unit_norm(unit));
}

TEST(Normalize, ZeroRowReportsIndex) {
    Matrix raw = Matrix::Ones(3, 4);
    raw.row(2).setZero();
    try {
        normalize_rows(raw);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroRow);
        ASSERT_TRUE(e.index().has_value());
        EXPECT_EQ(*e.index(), 2u);
    }
}

TEST(Batch, FromUnitRejectsLongRows) {
    Matrix a = Matrix::Identity(3, 3);
    Matrix p = a;
    p(1, 1) = 1.01;
    EXPECT_EQ(code_of([&] { DescriptorBatch::from_unit(a, p); }), ErrorCode::NotUnitNorm);
}

TEST(Batch, ShapeMismatch) {
    EXPECT_EQ(code_of([] { DescriptorBatch::from_raw(Matrix::Ones(3, 4), Matrix::Ones(4, 4)); }),
              ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([] { DescriptorBatch::from_raw(Matrix::Ones(3, 4), Matrix::Ones(3, 5)); }),
              ErrorCode::ShapeMismatch);
}

TEST(Distances, SymmetricWithZeroDiagonal) {
    Rng rng(3);
    const Matrix x = oracle::gaussian(9, 5, rng);
    const auto dist = pairwise_distances(x);
    for (std::size_t i = 0; i < 9; ++i) {
        EXPECT_EQ(dist(i, i), 0.0);
        for (std::size_t j = 0; j < 9; ++j) {
            EXPECT_EQ(dist(i, j), dist(j, i));
            const double direct = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
            EXPECT_NEAR(dist(i, j), direct, 1e-12);
        }
    }
}

TEST(Distances, TrueEuclideanOffTheSphere) {
    Matrix x(2, 2);
    x << 3, 0, 0, 4;
    EXPECT_NEAR(pairwise_distances(x)(0, 1), 5.0, 1e-12);
    EXPECT_NEAR(euclidean_distance(x.row(0), x.row(1)), 5.0, 1e-12);
}

TEST(Knn, MatchesFullSort) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = oracle::gaussian(16, 8, rng);
        for (std::size_t i = 0; i < 16; ++i) {
            const auto nb = knn(x, i, 5);
            EXPECT_EQ(nb.neighbor_indices, oracle::knn(x, i, 5));
            EXPECT_EQ(nb.center_index, i);
            for (std::size_t j = 0; j < 5; ++j) {
                EXPECT_EQ(nb.neighbor_matrix.col(static_cast<Eigen::Index>(j)),
                          x.row(static_cast<Eigen::Index>(nb.neighbor_indices[j])).transpose());
            }
            EXPECT_TRUE(std::is_sorted(nb.distances.begin(), nb.distances.end()));
        }
    }
}

TEST(Knn, SelfExcludedEvenWithDuplicates) {
    Matrix x(4, 3);
    x << 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1;
    const auto nb = knn(x, 1, 2);
    EXPECT_EQ(nb.neighbor_indices[0], 0u);
    EXPECT_EQ(nb.distances[0], 0.0);
}

TEST(Knn, TiesBrokenByIndex) {
    // Rows 1..4 are all at distance sqrt(2) from row 0.
    Matrix x(5, 5);
    x.setZero();
    for (int i = 0; i < 5; ++i) x(i, i) = 1.0;
    EXPECT_EQ(knn(x, 0, 3).neighbor_indices, (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_EQ(knn(x, 3, 3).neighbor_indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Knn, ValidatesK) {
    const Matrix x = Matrix::Identity(5, 5);
    EXPECT_EQ(code_of([&] { knn(x, 0, 0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([&] { knn(x, 0, 5); }), ErrorCode::KTooLarge);
    const Matrix wide = Matrix::Identity(6, 4);
    EXPECT_EQ(code_of([&] { knn(wide, 0, 4); }), ErrorCode::KNotLessThanD);
    EXPECT_EQ(code_of([&] { knn(x, 7, 2); }), ErrorCode::IndexOutOfBatch);
}

TEST(Knn, BoundaryGap) {
    Matrix x(4, 2);
    x << 0, 0, 1, 0, 3, 0, 6, 0;
    const auto dist = pairwise_distances(x);
    EXPECT_NEAR(knn_boundary_gap(dist, 0, 1), 2.0, 1e-12);
    EXPECT_NEAR(knn_boundary_gap(dist, 0, 2), 3.0, 1e-12);
    EXPECT_TRUE(std::isinf(knn_boundary_gap(dist, 0, 3)));
}

TEST(DescriptorFile, RoundTripsAtFloatPrecision) {
    Rng rng(5);
    const Matrix a = oracle::gaussian(7, 6, rng);
    const Matrix p = oracle::gaussian(7, 6, rng);
    const auto path = temp_file("roundtrip.tcd");
    write_descriptor_file(path, a, p);
    EXPECT_EQ(std::filesystem::file_size(path), 12u + 2u * 7u * 6u * 4u);
    const auto back = read_descriptor_file(path);
    EXPECT_EQ(back.a, a.cast<float>().cast<double>());
    EXPECT_EQ(back.p, p.cast<float>().cast<double>());
    std::filesystem::remove(path);
}

TEST(DescriptorFile, LittleEndianLayout) {
    Matrix a(1, 2);
    a << 1.0, -2.0;
    const auto path = temp_file("layout.tcd");
    write_descriptor_file(path, a, a);
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::vector<unsigned char> head = {'T', 'C', 'D', '1', 1, 0, 0, 0, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f,
                                             0x00, 0x00, 0x00, 0xc0};
    ASSERT_GE(bytes.size(), head.size());
    EXPECT_TRUE(std::equal(head.begin(), head.end(), bytes.begin()));
    std::filesystem::remove(path);
}

TEST(DescriptorFile, RejectsBadMagicAndTruncation) {
    const auto path = temp_file("bad.tcd");
    {
        std::ofstream out(path, std::ios::binary);
        out << "XXXX";
    }
    EXPECT_EQ(code_of([&] { read_descriptor_file(path); }), ErrorCode::Io);
    write_descriptor_file(path, Matrix::Ones(3, 3), Matrix::Ones(3, 3));
    std::filesystem::resize_file(path, 30);
    EXPECT_EQ(code_of([&] { read_descriptor_file(path); }), ErrorCode::Io);
    std::filesystem::remove(path);
    EXPECT_EQ(code_of([&] { read_descriptor_file(path); }), ErrorCode::Io);
}
