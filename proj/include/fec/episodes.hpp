#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fec/clustering.hpp"
#include "fec/linalg.hpp"
#include "fec/metrics.hpp"

namespace fec {

struct EmbeddingSet {
    std::vector<std::string> ids;
    Matrix features;  // N x D
    std::optional<LabelVector> labels;
    std::string source;

    std::size_t size() const noexcept { return ids.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    // Throws std::invalid_argument when an invariant is broken.
    void validate() const;
};

// Text format (UTF-8, LF):
//   fecemb v1 n=<N> d=<D> labeled=<0|1>
//   <id>,<label or ->,<f_0>,...,<f_{D-1}>
// Binary format: 16-byte magic "FECEMB01________", u64 N, u64 D, u8 labeled,
// then per example u64 id length, id bytes, i64 label (-1 if unlabeled) and
// D little-endian doubles.
enum class EmbeddingFormat { Text, Binary };

EmbeddingSet load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                     EmbeddingFormat format = EmbeddingFormat::Text);

EmbeddingSet parse_embeddings_text(std::string_view text, std::string_view source = "<memory>");
std::string format_embeddings_text(const EmbeddingSet& set);

enum class EpisodeKind { FourToOne, Balanced };

struct EpisodeSpec {
    EpisodeKind kind = EpisodeKind::FourToOne;
    std::size_t n_clusters = 2;
    std::vector<std::size_t> sizes{4, 1};
    std::size_t n_episodes = 1000;
    std::uint64_t seed = 0;

    static EpisodeSpec four_to_one(std::size_t n_episodes, std::uint64_t seed);
    static EpisodeSpec balanced(std::size_t n_clusters, std::size_t per_cluster, std::size_t n_episodes,
                                std::uint64_t seed);
    void validate() const;
};

// Deterministic in (spec.seed, episode_index). Classes are drawn uniformly
// from the ascending list of class ids, examples without replacement within
// a class, and the episode rows are shuffled.
EmbeddingSet sample_episode(const EmbeddingSet& corpus, const EpisodeSpec& spec, std::size_t episode_index);

// Ground-truth partition of a labeled set.
ClusterAssignment truth_assignment(const EmbeddingSet& set);

struct SyntheticSpec {
    std::size_t n_classes = 5;
    std::size_t per_class = 100;
    std::size_t dim = 32;
    double sep = 1.0;
    double noise = 0.05;
    std::uint64_t seed = 0;
};

// Class centers on the unit sphere, pairwise at least `sep` apart (rejection,
// 1000 tries per center); members are center + N(0, noise^2) per coordinate.
EmbeddingSet gen_synthetic(const SyntheticSpec& spec);

}  // namespace fec
