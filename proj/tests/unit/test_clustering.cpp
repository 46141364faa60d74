#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "fec/clustering.hpp"
#include "fec/errors.hpp"
#include "fec/rng.hpp"
#include "support/oracles.hpp"

using fec::ClusterAssignment;
using fec::Matrix;
using fec::Metric;

namespace {

// Three tight, well separated blobs in 2-D.
Matrix blobs(std::size_t per, fec::Rng& rng, double spread = 0.05) {
    const double centers[3][2] = {{0.0, 5.0}, {5.0, 0.0}, {-4.0, -4.0}};
    Matrix x(3 * per, 2);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < per; ++i)
            for (std::size_t d = 0; d < 2; ++d) x(c * per + i, d) = centers[c][d] + spread * rng.normal();
    return x;
}

std::vector<int> blob_truth(std::size_t per) {
    std::vector<int> t;
    for (int c = 0; c < 3; ++c) t.insert(t.end(), per, c);
    return t;
}

Matrix random_cost(std::size_t n, std::size_t k, fec::Rng& rng) {
    Matrix c(n, k);
    for (double& v : c.data()) v = rng.uniform();
    return c;
}

}  // namespace

TEST(Assignment, CanonicalForm) {
    const std::vector<int> raw{4, 4, 1, 7, 1};
    const auto a = ClusterAssignment::from_labels(raw);
    EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 1, 2, 1}));
    EXPECT_EQ(a.k, 3u);
    EXPECT_EQ(a.sizes, (std::vector<std::size_t>{2, 2, 1}));
    EXPECT_EQ(a.members(1), (std::vector<std::size_t>{2, 4}));
    const auto b = ClusterAssignment::from_labels(std::vector<int>{9, 9, 0, 3, 0});
    EXPECT_EQ(a, b);
    const auto padded = ClusterAssignment::from_labels(std::vector<int>{0, 0}, 2);
    EXPECT_EQ(padded.sizes, (std::vector<std::size_t>{2, 0}));
    EXPECT_THROW(ClusterAssignment::from_labels(std::vector<int>{0, 1, 2}, 2), std::invalid_argument);
    EXPECT_THROW(ClusterAssignment::from_labels(std::vector<int>{0, -1}), std::invalid_argument);
}

TEST(Enumeration, KnownCounts) {
    const std::vector<std::size_t> four_one{4, 1};
    const std::vector<std::size_t> two_two{2, 2};
    const std::vector<std::size_t> three_two_one{3, 2, 1};
    EXPECT_EQ(fec::enumerate_assignments(5, four_one).size(), 5u);
    EXPECT_EQ(fec::enumerate_assignments(4, two_two).size(), 3u);
    EXPECT_EQ(fec::enumerate_assignments(6, three_two_one).size(), 60u);
}

TEST(Enumeration, MatchesBruteForceAndMultinomial) {
    const std::vector<std::pair<std::size_t, std::vector<std::size_t>>> cases{
        {5, {4, 1}}, {4, {2, 2}}, {6, {3, 2, 1}}, {6, {2, 2, 2}}, {7, {3, 3, 1}}, {6, {1, 1, 4}}, {3, {3}},
        {8, {4, 4}}, {7, {2, 2, 3}}};
    for (const auto& [n, sizes] : cases) {
        const auto all = fec::enumerate_assignments(n, sizes);
        EXPECT_EQ(all.size(), oracle::count_partitions_bruteforce(n, sizes)) << n;
        EXPECT_DOUBLE_EQ(static_cast<double>(all.size()), oracle::multinomial_partition_count(n, sizes)) << n;
        std::set<std::vector<int>> distinct;
        for (const auto& a : all) {
            distinct.insert(a.labels);
            std::vector<std::size_t> got = a.sizes;
            std::vector<std::size_t> want = sizes;
            std::sort(got.begin(), got.end());
            std::sort(want.begin(), want.end());
            EXPECT_EQ(got, want);
            EXPECT_EQ(a, ClusterAssignment::from_labels(a.labels));
        }
        EXPECT_EQ(distinct.size(), all.size());
    }
}

TEST(Enumeration, RejectsBadInput) {
    const std::vector<std::size_t> bad_sum{3, 1};
    const std::vector<std::size_t> zero{5, 0};
    EXPECT_THROW(fec::enumerate_assignments(5, bad_sum), std::invalid_argument);
    EXPECT_THROW(fec::enumerate_assignments(5, zero), std::invalid_argument);
    const std::vector<std::size_t> big{7, 6};
    EXPECT_THROW(fec::enumerate_assignments(13, big), std::invalid_argument);
    EXPECT_NO_THROW(fec::enumerate_assignments(13, big, 13));
}

TEST(Sinkhorn, ConstantCostGivesUniformPlan) {
    const Matrix cost(6, 3, 0.7);
    const auto p = fec::sinkhorn_plan(cost, 0.1);
    for (double v : p.plan.data()) EXPECT_NEAR(v, 1.0 / 18.0, 1e-12);
}

TEST(Sinkhorn, MarginalsAcrossGammas) {
    fec::Rng rng(1);
    for (double gamma : {1.0, 0.1, 0.01, 0.001}) {
        for (int t = 0; t < 20; ++t) {
            const std::size_t k = 2 + rng.below(2);
            const std::size_t n = k * (1 + rng.below(3));
            const Matrix cost = random_cost(n, k, rng);
            const auto p = fec::sinkhorn_plan(cost, gamma);
            EXPECT_LT(p.marginal_violation, 1e-8);
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    EXPECT_GE(p.plan(i, j), 0.0);
                    s += p.plan(i, j);
                }
                EXPECT_NEAR(s, 1.0 / static_cast<double>(n), 1e-8);
            }
            for (std::size_t j = 0; j < k; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += p.plan(i, j);
                EXPECT_NEAR(s, 1.0 / static_cast<double>(k), 1e-8);
            }
        }
    }
}

TEST(Sinkhorn, SmallGammaRecoversOptimalAssignment) {
    fec::Rng rng(2);
    int compared = 0;
    int matched = 0;
    for (int t = 0; t < 60; ++t) {
        const std::size_t k = 2 + rng.below(2);
        const std::size_t n = k * (1 + rng.below(2));
        const Matrix cost = random_cost(n, k, rng);
        const std::vector<std::size_t> sizes(k, n / k);
        const auto best = oracle::best_transport_assignment(cost, sizes);
        if (best.runner_up - best.cost < 1e-2) continue;  // near ties
        ++compared;
        const auto labels = fec::round_to_columns(fec::sinkhorn_plan(cost, 0.001).plan, sizes);
        matched += labels == best.labels ? 1 : 0;
    }
    EXPECT_GT(compared, 30);
    EXPECT_EQ(matched, compared);
}

TEST(Sinkhorn, Errors) {
    Matrix cost(2, 2, 0.0);
    EXPECT_THROW(fec::sinkhorn_plan(cost, 0.0), std::invalid_argument);
    cost(0, 0) = std::nan("");
    EXPECT_THROW(fec::sinkhorn_plan(cost, 0.1), std::invalid_argument);
    // A huge cost range with a tiny iteration budget cannot converge.
    fec::Rng rng(3);
    Matrix hard = random_cost(6, 3, rng);
    for (double& v : hard.data()) v *= 1000.0;
    EXPECT_THROW(fec::sinkhorn_plan(hard, 1e-3, {1e-12, 3}), fec::ConvergenceError);
}

TEST(Rounding, RespectsCapacitiesAndPrefersLargeEntries) {
    const Matrix plan{{0.30, 0.05}, {0.20, 0.05}, {0.25, 0.15}, {0.0, 0.0}};
    const std::vector<std::size_t> sizes{2, 2};
    const auto cols = fec::round_to_columns(plan, sizes);
    EXPECT_EQ(cols, (std::vector<int>{0, 1, 0, 1}));
    const auto hard = fec::round_to_hard(plan, sizes);
    EXPECT_EQ(hard.labels, (std::vector<int>{0, 1, 0, 1}));
    EXPECT_THROW(fec::round_to_columns(plan, std::vector<std::size_t>{3, 2}), std::invalid_argument);
}

TEST(Rounding, TransportCostCloseToPlanCost) {
    // With a sharp plan the rounded assignment costs no more than the plan
    // cost plus the entropic slack.
    fec::Rng rng(4);
    for (int t = 0; t < 30; ++t) {
        const std::size_t n = 6;
        const std::size_t k = 3;
        const Matrix cost = random_cost(n, k, rng);
        const double gamma = 0.01;
        const auto p = fec::sinkhorn_plan(cost, gamma);
        const std::vector<std::size_t> sizes(k, n / k);
        const auto cols = fec::round_to_columns(p.plan, sizes);
        double plan_cost = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) plan_cost += p.plan(i, j) * cost(i, j);
        double hard_cost = 0.0;
        for (std::size_t i = 0; i < n; ++i) hard_cost += cost(i, static_cast<std::size_t>(cols[i])) / n;
        const auto best = oracle::best_transport_assignment(cost, sizes);
        EXPECT_GE(hard_cost + 1e-12, best.cost / n);
        EXPECT_LE(hard_cost, plan_cost + gamma * std::log(static_cast<double>(n * k)) + 1e-9);
    }
}

TEST(KMeans, SeparatesBlobs) {
    fec::Rng rng(5);
    const Matrix x = blobs(10, rng);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto a = fec::kmeans(x, 3, Metric::Euclidean, seed);
        EXPECT_TRUE(fec::same_partition(a.labels, blob_truth(10))) << seed;
    }
}

TEST(KMeans, ObjectiveNeverIncreases) {
    fec::Rng rng(6);
    for (int t = 0; t < 40; ++t) {
        Matrix x = oracle::random_matrix(30, 4, rng);
        const bool cosine = t % 2 == 1;
        if (cosine) {
            for (std::size_t i = 0; i < x.rows(); ++i) {
                const double nrm = fec::norm(x.row(i));
                for (double& v : x.row(i)) v /= nrm;
            }
        }
        const auto run = fec::kmeans_run(x, 4, cosine ? Metric::Cosine : Metric::Euclidean, rng.next_u64());
        for (std::size_t i = 1; i < run.objective.size(); ++i)
            EXPECT_LE(run.objective[i], run.objective[i - 1] + 1e-10) << t << " step " << i;
        EXPECT_EQ(run.assignment.k, 4u);
        for (std::size_t s : run.assignment.sizes) EXPECT_GT(s, 0u);
    }
}

TEST(KMeans, DeterministicAndHandlesDuplicates) {
    fec::Rng rng(7);
    const Matrix x = oracle::random_matrix(20, 3, rng);
    EXPECT_EQ(fec::kmeans(x, 3, Metric::Euclidean, 9), fec::kmeans(x, 3, Metric::Euclidean, 9));
    // Fewer distinct points than clusters still yields non-empty clusters.
    Matrix dup(6, 2, 1.0);
    dup(5, 0) = 2.0;
    const auto a = fec::kmeans(dup, 3, Metric::Euclidean, 1);
    for (std::size_t s : a.sizes) EXPECT_GT(s, 0u);
    EXPECT_THROW(fec::kmeans(x, 0, Metric::Euclidean, 1), std::invalid_argument);
    EXPECT_THROW(fec::kmeans(x, 21, Metric::Euclidean, 1), std::invalid_argument);
}

TEST(SinkhornKMeans, BalancedAndRecoversBlobs) {
    fec::Rng rng(8);
    const Matrix x = blobs(6, rng);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto a = fec::sinkhorn_kmeans(x, 3, Metric::Euclidean, 0.1, seed);
        EXPECT_EQ(a.sizes, (std::vector<std::size_t>{6, 6, 6}));
        EXPECT_TRUE(fec::same_partition(a.labels, blob_truth(6)));
    }
    EXPECT_THROW(fec::sinkhorn_kmeans(x, 4, Metric::Euclidean, 0.1, 0), std::invalid_argument);
}

TEST(SinkhornKMeans, FindsOptimalBalancedSplitOnSeparatedData) {
    // 8 points, two groups of 4 along a line: the balanced optimum is
    // unique and every other balanced split costs strictly more.
    fec::Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        Matrix x(8, 2);
        for (std::size_t i = 0; i < 8; ++i) {
            x(i, 0) = (i < 4 ? -3.0 : 3.0) + 0.3 * rng.normal();
            x(i, 1) = 0.3 * rng.normal();
        }
        double best = 1e300;
        std::vector<int> best_labels;
        for (const auto& a : fec::enumerate_assignments(8, std::vector<std::size_t>{4, 4})) {
            const double c = oracle::partition_cost(x, a.labels, Metric::Euclidean);
            if (c < best) {
                best = c;
                best_labels = a.labels;
            }
        }
        const auto got = fec::sinkhorn_kmeans(x, 2, Metric::Euclidean, 0.05, rng.next_u64());
        EXPECT_EQ(got.labels, best_labels);
    }
}

TEST(AssignmentCost, MatchesOracle) {
    fec::Rng rng(10);
    for (int t = 0; t < 20; ++t) {
        const Matrix x = oracle::random_matrix(9, 3, rng);
        std::vector<int> labels(9);
        for (std::size_t i = 0; i < 9; ++i) labels[i] = static_cast<int>(i % 3);
        const auto a = ClusterAssignment::from_labels(labels);
        for (Metric m : {Metric::Euclidean, Metric::Cosine})
            EXPECT_NEAR(fec::assignment_cost(x, a, m), oracle::partition_cost(x, labels, m), 1e-12);
    }
}
