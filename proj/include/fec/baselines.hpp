#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "fec/clustering.hpp"
#include "fec/linalg.hpp"

namespace fec {

// Index of the example farthest from the mean of the other four, after an
// optional PCA projection. Ties go to the lowest index.
std::size_t run_baseline_41(const Matrix& x, Metric metric, std::optional<std::size_t> pca_dims = std::nullopt);

// Two clusters: `index` alone, everything else together.
ClusterAssignment singleton_assignment(std::size_t n, std::size_t index);

enum class ClusterMethod { KMeans, SinkhornKMeans, PcaSinkhornKMeans };

std::string_view to_string(ClusterMethod m);

ClusterAssignment run_baseline_cluster(const Matrix& x, std::size_t k, ClusterMethod method, Metric metric,
                                       std::optional<std::size_t> pca_dims, double gamma, std::uint64_t seed);

}  // namespace fec
