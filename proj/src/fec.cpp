#include "fec/fec.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

#include "fec/rng.hpp"

namespace fec {

namespace {

// Stream ids for derive_seed.
constexpr std::uint64_t kHeadStream = 1;
constexpr std::uint64_t kCandidateStream = 2;
constexpr std::uint64_t kRefineStream = 3;

struct Unit {
    ContrastiveHead head;
    AdamState adam;
};

Unit make_unit(const HeadShape& shape, std::uint64_t seed, double lr) {
    Unit u{init_head(shape, seed), {}};
    u.adam = AdamState::for_head(u.head, lr);
    return u;
}

std::size_t argmin(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[best]) best = i;
    return best;
}

nlohmann::json ablations_json(const Ablations& a) {
    return {{"select_best", a.select_best}, {"refine", a.refine}, {"reinit", a.reinit}};
}

}  // namespace

std::string_view to_string(BaseClusterer b) {
    return b == BaseClusterer::KMeans ? "kmeans" : "sinkhorn";
}

nlohmann::json to_json(const ExhaustiveConfig& cfg) {
    return {
        {"algorithm", "exhaustive"},
        {"alpha", cfg.alpha},
        {"ensembles", cfg.n_ensemble},
        {"delta", cfg.delta},
        {"sizes", cfg.sizes},
        {"metric", std::string(to_string(cfg.metric))},
        {"seed", cfg.seed},
        {"max_steps", cfg.max_steps},
        {"out_dim", cfg.out_dim},
        {"layers", cfg.n_layers},
        {"nonlinearity", "relu"},
        {"lr", cfg.lr},
        {"loss", std::string(to_string(cfg.loss))},
        {"loss_reduction", "mean"},
        {"member_statistic", "min"},
        {"enumeration_cap", cfg.enumeration_cap},
    };
}

nlohmann::json to_json(const IterativeConfig& cfg) {
    return {
        {"algorithm", "iterative"},
        {"alpha", cfg.alpha},
        {"candidates", cfg.n_candidates},
        {"ensembles", cfg.n_ensemble},
        {"t_fine", cfg.t_fine},
        {"t_refine", cfg.t_refine},
        {"metric", std::string(to_string(cfg.metric))},
        {"base", std::string(to_string(cfg.base))},
        {"gamma", cfg.gamma},
        {"seed", cfg.seed},
        {"ablations", ablations_json(cfg.ablations)},
        {"out_dim", cfg.out_dim},
        {"layers", cfg.n_layers},
        {"nonlinearity", "relu"},
        {"lr", cfg.lr},
        {"loss", std::string(to_string(cfg.loss))},
        {"loss_reduction", "mean"},
        {"member_statistic", "min"},
    };
}

ClusterAssignment run_base_clusterer(const Matrix& x, std::size_t k, BaseClusterer base, Metric metric, double gamma,
                                     std::uint64_t seed) {
    if (base == BaseClusterer::KMeans) return kmeans(x, k, metric, seed);
    return sinkhorn_kmeans(x, k, metric, gamma, seed);
}

EpisodeResult fec_exhaustive(const Matrix& x, const ExhaustiveConfig& cfg) {
    if (!(cfg.alpha > 0.0)) throw std::invalid_argument("fec_exhaustive: alpha must be positive");
    if (cfg.n_ensemble == 0) throw std::invalid_argument("fec_exhaustive: need at least one ensemble member");
    if (cfg.max_steps == 0) throw std::invalid_argument("fec_exhaustive: max_steps must be >= 1");

    const auto assignments = enumerate_assignments(x.rows(), cfg.sizes, cfg.enumeration_cap);
    const HeadShape shape{x.cols(), cfg.out_dim, cfg.n_layers, 0};
    const LossOptions loss_opts{cfg.alpha, cfg.metric, cfg.loss};

    EpisodeResult result;
    result.method = "fec";
    result.config = to_json(cfg);
    std::vector<Unit> units;
    for (std::size_t c = 0; c < assignments.size(); ++c) {
        CandidateRecord rec;
        rec.id = c;
        rec.assignment = assignments[c];
        rec.history.emplace_back(0, assignments[c]);
        result.candidates.push_back(std::move(rec));
        for (std::size_t m = 0; m < cfg.n_ensemble; ++m) {
            units.push_back(make_unit(shape, derive_seed(cfg.seed, {kHeadStream, c, m, 0}), cfg.lr));
            result.traces.push_back(LossTrace{c, m, {}});
        }
    }

    const std::size_t n_cand = assignments.size();
    std::vector<double> stats(n_cand);
    std::size_t best = 0;
    LossResult r;
    for (std::size_t round = 0; round < cfg.max_steps; ++round) {
        for (std::size_t c = 0; c < n_cand; ++c) {
            double stat = std::numeric_limits<double>::infinity();
            for (std::size_t m = 0; m < cfg.n_ensemble; ++m) {
                const std::size_t u = c * cfg.n_ensemble + m;
                loss_and_grad(units[u].head, x, assignments[c], loss_opts, r);
                result.traces[u].losses.push_back(r.loss);
                stat = std::min(stat, r.loss);
                adam_step(units[u].head, units[u].adam, r.grads);
            }
            stats[c] = stat;
            result.candidates[c].losses.push_back(stat);
        }
        best = argmin(stats);
        result.best_by_round.push_back(best);
        result.rounds = round + 1;
        if (round >= 1 && cfg.delta > 0.0) {
            const double decrease = result.candidates[best].losses[round - 1] - stats[best];
            if (decrease < cfg.delta) break;
        }
    }

    for (std::size_t c = 0; c < n_cand; ++c) result.candidates[c].final_loss = stats[c];
    result.chosen_index = best;
    result.chosen = assignments[best];
    return result;
}

EpisodeResult fec_iterative(const Matrix& x, std::size_t k, const IterativeConfig& cfg) {
    if (!(cfg.alpha > 0.0)) throw std::invalid_argument("fec_iterative: alpha must be positive");
    if (cfg.n_candidates == 0) throw std::invalid_argument("fec_iterative: need at least one candidate");
    if (cfg.n_ensemble == 0) throw std::invalid_argument("fec_iterative: need at least one ensemble member");
    if (cfg.t_fine == 0) throw std::invalid_argument("fec_iterative: t_fine must be >= 1");
    if (cfg.t_refine == 0 || cfg.t_refine > cfg.t_fine)
        throw std::invalid_argument("fec_iterative: need 1 <= t_refine <= t_fine");
    if (cfg.base == BaseClusterer::SinkhornKMeans && (k == 0 || x.rows() % k != 0))
        throw std::invalid_argument("fec_iterative: N must be divisible by k for Sinkhorn K-means");

    EpisodeResult result;
    result.method = cfg.base == BaseClusterer::SinkhornKMeans ? "fec+sinkhorn" : "fec+kmeans";
    result.config = to_json(cfg);
    result.select_best = cfg.ablations.select_best;

    // Candidate generation with distinct seeds; duplicates are re-drawn.
    for (std::size_t c = 0; c < cfg.n_candidates; ++c) {
        ClusterAssignment a;
        for (std::size_t attempt = 0;; ++attempt) {
            const std::uint64_t seed =
                c == 0 && attempt == 0 ? cfg.seed : derive_seed(cfg.seed, {kCandidateStream, c, attempt});
            a = run_base_clusterer(x, k, cfg.base, cfg.metric, cfg.gamma, seed);
            const bool duplicate = std::any_of(result.candidates.begin(), result.candidates.end(),
                                               [&](const CandidateRecord& r) { return r.assignment == a; });
            if (!duplicate || attempt >= cfg.max_generation_attempts) break;
        }
        CandidateRecord rec;
        rec.id = c;
        rec.assignment = a;
        rec.history.emplace_back(0, a);
        result.candidates.push_back(std::move(rec));
    }

    const HeadShape shape{x.cols(), cfg.out_dim, cfg.n_layers, 0};
    const LossOptions loss_opts{cfg.alpha, cfg.metric, cfg.loss};
    const std::size_t n_ens = cfg.n_ensemble;
    for (std::size_t c = 0; c < cfg.n_candidates; ++c)
        for (std::size_t m = 0; m < n_ens; ++m) result.traces.push_back(LossTrace{c, m, {}});

    // Candidates never interact before selection, so each one is trained to
    // the end in turn; only its own ensemble is kept in memory.
    std::vector<double> stats(cfg.n_candidates);
    std::vector<double> member_loss(n_ens);
    LossResult r;
    for (std::size_t c = 0; c < cfg.n_candidates; ++c) {
        auto& cand = result.candidates[c];
        std::vector<Unit> units;
        for (std::size_t m = 0; m < n_ens; ++m)
            units.push_back(make_unit(shape, derive_seed(cfg.seed, {kHeadStream, c, m, 0}), cfg.lr));
        std::size_t events = 0;
        for (std::size_t round = 0; round < cfg.t_fine; ++round) {
            for (std::size_t m = 0; m < n_ens; ++m) {
                loss_and_grad(units[m].head, x, cand.assignment, loss_opts, r);
                result.traces[c * n_ens + m].losses.push_back(r.loss);
                member_loss[m] = r.loss;
                adam_step(units[m].head, units[m].adam, r.grads);
            }
            const std::size_t best_member = argmin(member_loss);
            stats[c] = member_loss[best_member];
            cand.losses.push_back(stats[c]);

            // Rounds are 1-based in the refinement schedule: refine when t = -1 mod T_r.
            const std::size_t t = round + 1;
            if (!cfg.ablations.refine || (t + 1) % cfg.t_refine != 0) continue;
            const std::size_t event = events++;
            const Matrix embedded = forward(units[best_member].head, x);
            cand.assignment = run_base_clusterer(embedded, k, cfg.base, cfg.metric, cfg.gamma,
                                                 derive_seed(cfg.seed, {kRefineStream, c, event}));
            cand.history.emplace_back(round + 1, cand.assignment);
            result.refinements.push_back({c, round, best_member});
            if (cfg.ablations.reinit) {
                for (std::size_t m = 0; m < n_ens; ++m)
                    units[m] = make_unit(shape, derive_seed(cfg.seed, {kHeadStream, c, m, event + 1}), cfg.lr);
            }
        }
    }
    std::stable_sort(result.refinements.begin(), result.refinements.end(),
                     [](const RefinementEvent& a, const RefinementEvent& b) { return a.round < b.round; });
    std::vector<double> at_round(cfg.n_candidates);
    for (std::size_t round = 0; round < cfg.t_fine; ++round) {
        for (std::size_t c = 0; c < cfg.n_candidates; ++c) at_round[c] = result.candidates[c].losses[round];
        result.best_by_round.push_back(argmin(at_round));
    }
    result.rounds = cfg.t_fine;

    for (std::size_t c = 0; c < cfg.n_candidates; ++c) result.candidates[c].final_loss = stats[c];
    const std::size_t best = argmin(stats);
    result.chosen_index = best;
    result.chosen = result.candidates[best].assignment;
    return result;
}

namespace {

const ClusterAssignment& assignment_at(const CandidateRecord& cand, std::size_t round) {
    const ClusterAssignment* current = &cand.history.front().second;
    for (const auto& [start, a] : cand.history) {
        if (start <= round) current = &a;
    }
    return *current;
}

}  // namespace

void attach_truth(EpisodeResult& result, const ClusterAssignment& truth) {
    if (truth.n() != result.chosen.n()) throw std::invalid_argument("attach_truth: truth length mismatch");
    result.truth = truth;
    EpisodeMetrics m;
    m.correct = same_partition(result.chosen.labels, truth.labels);
    if (!result.select_best && !result.candidates.empty()) {
        m.averaged = true;
        for (const auto& c : result.candidates) {
            m.ari += ari(c.assignment.labels, truth.labels);
            m.nmi += nmi(c.assignment.labels, truth.labels);
        }
        m.ari /= static_cast<double>(result.candidates.size());
        m.nmi /= static_cast<double>(result.candidates.size());
    } else {
        m.ari = ari(result.chosen.labels, truth.labels);
        m.nmi = nmi(result.chosen.labels, truth.labels);
    }
    result.metrics = m;

    result.curve_ari.clear();
    result.curve_correct.clear();
    for (std::size_t r = 0; r < result.best_by_round.size(); ++r) {
        const auto& a = assignment_at(result.candidates[result.best_by_round[r]], r);
        result.curve_ari.push_back(ari(a.labels, truth.labels));
        result.curve_correct.push_back(same_partition(a.labels, truth.labels) ? 1 : 0);
    }
}

double selection_accuracy(std::span<const EpisodeResult> results) {
    std::vector<SelectionOutcome> outcomes;
    outcomes.reserve(results.size());
    for (const auto& r : results) {
        if (!r.truth) throw std::invalid_argument("selection_accuracy: episode without ground truth");
        outcomes.push_back({r.chosen.labels, r.truth->labels});
    }
    return selection_accuracy(outcomes);
}

}  // namespace fec
