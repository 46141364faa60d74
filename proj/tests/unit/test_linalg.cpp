#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fec/linalg.hpp"
#include "fec/rng.hpp"
#include "support/oracles.hpp"

using fec::Matrix;
using fec::Metric;

TEST(Linalg, DistanceExamples) {
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> b{0.0, 1.0};
    const std::vector<double> c{-2.0, 0.0};
    EXPECT_DOUBLE_EQ(fec::distance(a, b, Metric::Euclidean), std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(fec::distance(a, b, Metric::Cosine), 1.0);
    EXPECT_DOUBLE_EQ(fec::distance(a, c, Metric::Cosine), 2.0);
    EXPECT_DOUBLE_EQ(fec::distance(a, a, Metric::Cosine), 0.0);
}

TEST(Linalg, DistanceErrors) {
    const std::vector<double> a{1.0, 0.0};
    const std::vector<double> z{0.0, 0.0};
    const std::vector<double> three{1.0, 2.0, 3.0};
    EXPECT_THROW(fec::distance(a, three, Metric::Euclidean), std::invalid_argument);
    EXPECT_THROW(fec::distance(a, z, Metric::Cosine), std::invalid_argument);
    EXPECT_DOUBLE_EQ(fec::distance(a, z, Metric::Euclidean), 1.0);
}

TEST(Linalg, CosineStaysInRange) {
    fec::Rng rng(1);
    for (int t = 0; t < 500; ++t) {
        std::vector<double> u(4);
        for (double& v : u) v = rng.normal();
        std::vector<double> w = u;
        for (double& v : w) v *= -3.0;
        const double d_same = fec::distance(u, u, Metric::Cosine);
        const double d_opp = fec::distance(u, w, Metric::Cosine);
        EXPECT_GE(d_same, 0.0);
        EXPECT_LE(d_opp, 2.0);
    }
}

TEST(Linalg, ParseMetric) {
    EXPECT_EQ(fec::parse_metric("cosine"), Metric::Cosine);
    EXPECT_EQ(fec::parse_metric("euclidean"), Metric::Euclidean);
    EXPECT_EQ(fec::to_string(Metric::Cosine), "cosine");
    EXPECT_THROW(fec::parse_metric("manhattan"), std::invalid_argument);
}

TEST(Linalg, MatmulMatchesNaive) {
    fec::Rng rng(2);
    const Matrix a = oracle::random_matrix(7, 5, rng);
    const Matrix b = oracle::random_matrix(5, 3, rng);
    const Matrix c = fec::matmul(a, b);
    const Matrix cnt = fec::matmul_nt(a, fec::transpose(b));
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 5; ++k) s += a(i, k) * b(k, j);
            EXPECT_NEAR(c(i, j), s, 1e-12);
            EXPECT_NEAR(cnt(i, j), s, 1e-12);
        }
    }
    EXPECT_THROW(fec::matmul(a, a), std::invalid_argument);
}

TEST(Linalg, CovarianceUsesSampleNormalization) {
    const Matrix x{{1.0, 2.0}, {3.0, 6.0}, {5.0, 10.0}};
    const Matrix c = fec::covariance(x);
    EXPECT_DOUBLE_EQ(c(0, 0), 4.0);
    EXPECT_DOUBLE_EQ(c(0, 1), 8.0);
    EXPECT_DOUBLE_EQ(c(1, 1), 16.0);
}

TEST(Linalg, JacobiDiagonalizes) {
    fec::Rng rng(4);
    for (std::size_t n : {1u, 2u, 3u, 6u, 12u}) {
        const Matrix g = oracle::random_matrix(n, n, rng);
        Matrix a(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) a(i, j) = g(i, j) + g(j, i);
        const auto es = fec::symmetric_eigen(a);
        // A v = lambda v, orthonormal vectors, descending values.
        for (std::size_t k = 0; k < n; ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                double av = 0.0;
                for (std::size_t j = 0; j < n; ++j) av += a(i, j) * es.vectors(j, k);
                EXPECT_NEAR(av, es.values[k] * es.vectors(i, k), 1e-9);
            }
            for (std::size_t l = 0; l < n; ++l) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += es.vectors(i, k) * es.vectors(i, l);
                EXPECT_NEAR(d, k == l ? 1.0 : 0.0, 1e-10);
            }
            if (k > 0) EXPECT_GE(es.values[k - 1], es.values[k]);
        }
        // Trace is preserved.
        double tr = 0.0;
        for (std::size_t i = 0; i < n; ++i) tr += a(i, i);
        EXPECT_NEAR(std::accumulate(es.values.begin(), es.values.end(), 0.0), tr, 1e-9);
    }
}

TEST(Linalg, JacobiSignConvention) {
    const Matrix a{{2.0, 1.0}, {1.0, 2.0}};
    const auto es = fec::symmetric_eigen(a);
    EXPECT_NEAR(es.values[0], 3.0, 1e-12);
    EXPECT_NEAR(es.values[1], 1.0, 1e-12);
    for (std::size_t k = 0; k < 2; ++k) {
        const double big = std::abs(es.vectors(0, k)) >= std::abs(es.vectors(1, k)) ? es.vectors(0, k) : es.vectors(1, k);
        EXPECT_GT(big, 0.0);
    }
}

TEST(Linalg, PcaFullRankPreservesEuclideanDistances) {
    fec::Rng rng(5);
    const Matrix x = oracle::random_matrix(9, 4, rng);
    const Matrix p = fec::pca_project(x, 4);
    ASSERT_EQ(p.cols(), 4u);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t j = 0; j < 9; ++j)
            EXPECT_NEAR(fec::distance(x.row(i), x.row(j), Metric::Euclidean),
                        fec::distance(p.row(i), p.row(j), Metric::Euclidean), 1e-10);
}

TEST(Linalg, PcaLeadingAxisCapturesMostVariance) {
    fec::Rng rng(6);
    Matrix x(50, 3);
    for (std::size_t i = 0; i < 50; ++i) {
        const double t = rng.normal();
        x(i, 0) = 5.0 * t + 0.01 * rng.normal();
        x(i, 1) = -5.0 * t + 0.01 * rng.normal();
        x(i, 2) = 0.01 * rng.normal();
    }
    const Matrix p = fec::pca_project(x, 1);
    double var_p = 0.0;
    for (std::size_t i = 0; i < 50; ++i) var_p += p(i, 0) * p(i, 0);
    const Matrix c = fec::covariance(x);
    const double total = (c(0, 0) + c(1, 1) + c(2, 2)) * 49.0;
    EXPECT_GT(var_p / total, 0.999);
    EXPECT_THROW(fec::pca_project(x, 4), std::invalid_argument);
}
