#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fec/linalg.hpp"
#include "fec/metrics.hpp"

namespace fec {

class Rng;

// Hard partition of N examples into k clusters. Labels are kept in canonical
// form (clusters numbered by first appearance), so equal partitions compare
// equal. Clusters that never appear take the trailing ids with size 0.
struct ClusterAssignment {
    LabelVector labels;
    std::size_t k = 0;
    std::vector<std::size_t> sizes;

    // Canonicalizes arbitrary non-negative labels. k defaults to the number
    // of distinct labels and may not be smaller than it.
    static ClusterAssignment from_labels(std::span<const int> labels, std::size_t k = 0);

    std::size_t n() const noexcept { return labels.size(); }
    std::vector<std::size_t> members(std::size_t cluster) const;

    bool operator==(const ClusterAssignment&) const = default;
};

// Entropic transport plan with row marginals 1/N and column marginals 1/K.
struct SoftAssignment {
    Matrix plan;
    double gamma = 0.0;
    std::size_t iterations = 0;
    double marginal_violation = 0.0;
};

struct SinkhornOptions {
    double tol = 1e-8;
    std::size_t max_iters = 1000;
};

struct KMeansOptions {
    std::size_t max_iters = 100;
};

struct KMeansRun {
    ClusterAssignment assignment;
    Matrix centers;
    // Objective after each assignment step: sum of squared Euclidean
    // distances, or sum of cosine distances, to the current centers.
    std::vector<double> objective;
    std::size_t iterations = 0;
};

// k-means++ seeding: first center uniform, then D^2 sampling.
Matrix seed_centers(const Matrix& x, std::size_t k, Metric metric, Rng& rng);

// Lloyd iterations from k-means++ centers. Empty clusters are repaired by
// moving the point farthest from its center into them.
KMeansRun kmeans_run(const Matrix& x, std::size_t k, Metric metric, std::uint64_t seed,
                     const KMeansOptions& opts = {});
ClusterAssignment kmeans(const Matrix& x, std::size_t k, Metric metric, std::uint64_t seed,
                         const KMeansOptions& opts = {});

// Log-domain Sinkhorn-Knopp scaling of exp(-cost / gamma) onto the transport
// polytope. Throws ConvergenceError if the row marginals are still off by
// more than tol after max_iters sweeps.
SoftAssignment sinkhorn_plan(const Matrix& cost, double gamma, const SinkhornOptions& opts = {});

// Greedy rounding: take the largest remaining entry whose row is unassigned
// and whose column has capacity left. Ties go to the lowest row, then column.
// round_to_columns returns the raw column per row; round_to_hard the
// canonical partition.
std::vector<int> round_to_columns(const Matrix& plan, std::span<const std::size_t> sizes);
ClusterAssignment round_to_hard(const Matrix& plan, std::span<const std::size_t> sizes);

// Equal-size K-means: alternate a Sinkhorn plan against the current centers
// with plan-weighted center updates until the rounded assignment repeats.
ClusterAssignment sinkhorn_kmeans(const Matrix& x, std::size_t k, Metric metric, double gamma,
                                  std::uint64_t seed, const SinkhornOptions& sk = {},
                                  std::size_t max_iters = 100);

// Every partition of n items into unlabeled groups with the given sizes.
std::vector<ClusterAssignment> enumerate_assignments(std::size_t n, std::span<const std::size_t> sizes,
                                                     std::size_t cap = 12);

// Cluster means (rows) for a hard assignment.
Matrix assignment_centers(const Matrix& x, const ClusterAssignment& a);

// Sum over examples of d(x_i, center of its cluster).
double assignment_cost(const Matrix& x, const ClusterAssignment& a, Metric metric);

}  // namespace fec
