#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fec/clustering.hpp"
#include "fec/contrastive.hpp"
#include "fec/linalg.hpp"

namespace fec {

// Exhaustive search over every partition with the given cluster sizes.
struct ExhaustiveConfig {
    double alpha = 10.0;
    std::size_t n_ensemble = 32;
    // Stop once the best candidate's round-to-round loss decrease is below
    // delta. delta <= 0 disables early stopping (run max_steps rounds).
    double delta = 1e-5;
    std::vector<std::size_t> sizes{4, 1};
    Metric metric = Metric::Cosine;
    std::uint64_t seed = 0;
    std::size_t max_steps = 1000;
    std::size_t out_dim = 512;
    std::size_t n_layers = 1;
    double lr = 1e-3;
    LossForm loss = LossForm::NegLog;
    std::size_t enumeration_cap = 12;
};

enum class BaseClusterer { KMeans, SinkhornKMeans };

std::string_view to_string(BaseClusterer b);

struct Ablations {
    bool select_best = true;
    bool refine = true;
    bool reinit = true;
};

// Iterative partial search with periodic refinement (ensemble version).
struct IterativeConfig {
    double alpha = 10.0;
    std::size_t n_candidates = 8;
    std::size_t n_ensemble = 5;
    std::size_t t_fine = 64;
    std::size_t t_refine = 4;
    Metric metric = Metric::Cosine;
    BaseClusterer base = BaseClusterer::SinkhornKMeans;
    double gamma = 0.1;
    std::uint64_t seed = 0;
    Ablations ablations;
    std::size_t out_dim = 512;
    std::size_t n_layers = 2;
    double lr = 1e-3;
    LossForm loss = LossForm::NegLog;
    std::size_t max_generation_attempts = 10;
};

nlohmann::json to_json(const ExhaustiveConfig& cfg);
nlohmann::json to_json(const IterativeConfig& cfg);

struct CandidateRecord {
    std::size_t id = 0;
    ClusterAssignment assignment;          // in effect at the end
    double final_loss = 0.0;               // best member's loss in the last round
    std::vector<double> losses;            // per round, min over members
    // (first round the assignment is in effect, assignment)
    std::vector<std::pair<std::size_t, ClusterAssignment>> history;
};

struct RefinementEvent {
    std::size_t candidate = 0;
    std::size_t round = 0;  // 0-based round after which refinement ran
    std::size_t member = 0; // member whose feature space was used
};

struct EpisodeMetrics {
    double ari = 0.0;
    double nmi = 0.0;
    bool correct = false;
    bool averaged = false;  // mean over all candidates (selection ablated)
};

struct EpisodeResult {
    std::size_t episode_id = 0;
    std::string method;
    ClusterAssignment chosen;
    std::optional<std::size_t> chosen_index;
    std::optional<ClusterAssignment> truth;
    std::vector<CandidateRecord> candidates;
    std::vector<LossTrace> traces;  // one per (candidate, member)
    std::vector<RefinementEvent> refinements;
    std::vector<std::size_t> best_by_round;
    std::size_t rounds = 0;
    bool select_best = true;
    std::optional<EpisodeMetrics> metrics;
    // Per round, for the candidate that is best at that round (with truth).
    std::vector<double> curve_ari;
    std::vector<int> curve_correct;
    nlohmann::json config;
};

EpisodeResult fec_exhaustive(const Matrix& x, const ExhaustiveConfig& cfg);
EpisodeResult fec_iterative(const Matrix& x, std::size_t k, const IterativeConfig& cfg);

ClusterAssignment run_base_clusterer(const Matrix& x, std::size_t k, BaseClusterer base, Metric metric, double gamma,
                                     std::uint64_t seed);

// Records the ground truth and fills metrics and per-round curves.
void attach_truth(EpisodeResult& result, const ClusterAssignment& truth);

// Fraction of results whose chosen partition equals the ground truth.
double selection_accuracy(std::span<const EpisodeResult> results);

}  // namespace fec
