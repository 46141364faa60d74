#include "fec/baselines.hpp"

#include <stdexcept>
#include <string>
#include <vector>

#include "fec/fec.hpp"

namespace fec {

std::size_t run_baseline_41(const Matrix& x_in, Metric metric, std::optional<std::size_t> pca_dims) {
    if (x_in.rows() < 2) throw std::invalid_argument("run_baseline_41: need at least two examples");
    const Matrix x = pca_dims ? pca_project(x_in, *pca_dims) : x_in;
    const std::size_t n = x.rows();

    std::vector<double> total(x.cols(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) total[j] += x(i, j);

    std::size_t best = 0;
    double best_dist = -1.0;
    std::vector<double> rest(x.cols());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) rest[j] = (total[j] - x(i, j)) / static_cast<double>(n - 1);
        const double d = distance(x.row(i), rest, metric);
        if (d > best_dist) {
            best_dist = d;
            best = i;
        }
    }
    return best;
}

ClusterAssignment singleton_assignment(std::size_t n, std::size_t index) {
    if (index >= n) throw std::out_of_range("singleton_assignment: index out of range");
    std::vector<int> labels(n, 0);
    labels[index] = 1;
    return ClusterAssignment::from_labels(labels, n > 1 ? 2 : 1);
}

std::string_view to_string(ClusterMethod m) {
    switch (m) {
        case ClusterMethod::KMeans: return "kmeans";
        case ClusterMethod::SinkhornKMeans: return "sinkhorn";
        case ClusterMethod::PcaSinkhornKMeans: return "pca+sinkhorn";
    }
    return "unknown";
}

ClusterAssignment run_baseline_cluster(const Matrix& x, std::size_t k, ClusterMethod method, Metric metric,
                                       std::optional<std::size_t> pca_dims, double gamma, std::uint64_t seed) {
    switch (method) {
        case ClusterMethod::KMeans:
            return run_base_clusterer(x, k, BaseClusterer::KMeans, metric, gamma, seed);
        case ClusterMethod::SinkhornKMeans:
            return run_base_clusterer(x, k, BaseClusterer::SinkhornKMeans, metric, gamma, seed);
        case ClusterMethod::PcaSinkhornKMeans:
            if (!pca_dims) throw std::invalid_argument("pca+sinkhorn requires pca_dims");
            return run_base_clusterer(pca_project(x, *pca_dims), k, BaseClusterer::SinkhornKMeans, metric, gamma,
                                      seed);
    }
    throw std::invalid_argument("run_baseline_cluster: unknown method");
}

}  // namespace fec
