#include "fec/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "fec/baselines.hpp"
#include "fec/episodes.hpp"
#include "fec/errors.hpp"
#include "fec/fec.hpp"
#include "fec/result_io.hpp"
#include "fec/rng.hpp"

namespace fec::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr std::uint64_t kMethodStream = 0xFEC;

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

Level log_level() {
    const char* env = std::getenv("FEC_LOG");
    if (env == nullptr) return Level::Warn;
    const std::string v(env);
    if (v == "debug") return Level::Debug;
    if (v == "info") return Level::Info;
    if (v == "error") return Level::Error;
    return Level::Warn;
}

class Logger {
public:
    explicit Logger(std::ostream& err) : err_(err), level_(log_level()) {}

    void log(Level level, const std::string& msg) {
        if (level > level_) return;
        static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
        std::lock_guard lock(mu_);
        err_ << "[" << kNames[static_cast<int>(level)] << "] " << msg << '\n';
    }

private:
    std::ostream& err_;
    Level level_;
    std::mutex mu_;
};

struct EpisodeOutput {
    std::string payload;
    std::string traces;
    bool correct = false;
    double ari = 0.0;
    double nmi = 0.0;
};

// Runs `count` episodes on `jobs` workers; results are collected by index
// and written by the caller in order.
template <typename Fn>
std::vector<EpisodeOutput> run_episodes(std::size_t count, std::size_t jobs, Logger& log, Fn&& fn) {
    std::vector<std::optional<EpisodeOutput>> slots(count);
    std::vector<std::string> errors(count);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                slots[i] = fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
            const std::size_t d = ++done;
            if (d % 10 == 0 || d == count) log.log(Level::Info, std::to_string(d) + "/" + std::to_string(count) + " episodes");
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < jobs; ++t) pool.emplace_back(worker);
        worker();
    }
    std::vector<EpisodeOutput> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!slots[i]) throw std::runtime_error("episode " + std::to_string(i) + ": " + errors[i]);
        out.push_back(std::move(*slots[i]));
    }
    return out;
}

EpisodeOutput finish_episode(EpisodeResult& r, const ClusterAssignment& truth, const std::string& label,
                             const json& run_config, bool traces) {
    attach_truth(r, truth);
    json cfg = {{"run", run_config}};
    if (!r.config.is_null()) cfg["algorithm"] = r.config;
    r.config = cfg;
    EpisodeOutput o;
    o.payload = episode_to_json(r, label).dump(1) + "\n";
    if (traces) {
        std::ostringstream s;
        write_traces(s, r);
        o.traces = s.str();
    }
    o.correct = r.metrics->correct;
    o.ari = r.metrics->ari;
    o.nmi = r.metrics->nmi;
    return o;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string episode_filename(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "episode_%06zu.json", i);
    return buf;
}

void write_outputs(const fs::path& dir, const std::vector<EpisodeOutput>& outputs, const json& run_config,
                   const std::string& summary, bool traces) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < outputs.size(); ++i) write_file(dir / episode_filename(i), outputs[i].payload);
    write_file(dir / "config.json", run_config.dump(2) + "\n");
    write_file(dir / "summary.txt", summary + "\n");
    if (traces) {
        std::ostringstream s;
        write_trace_header(s);
        for (const auto& o : outputs) s << o.traces;
        write_file(dir / "traces.csv", s.str());
    }
}

struct CommonOptions {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
    cmd->add_option("--jobs", o.jobs, "Worker threads for episodes")->capture_default_str()->check(CLI::PositiveNumber);
    cmd->add_option("--out-dir", o.out_dir, "Directory for per-episode results")->required();
}

// ---- gen -------------------------------------------------------------------

struct GenOptions {
    SyntheticSpec spec{5, 100, 32, 1.0, 0.05, 0};
    std::string out;
    std::string format = "text";
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
    const auto set = gen_synthetic(o.spec);
    save_embeddings(set, o.out, o.format == "binary" ? EmbeddingFormat::Binary : EmbeddingFormat::Text);
    out << "wrote " << set.size() << " examples (d=" << set.dim() << ") to " << o.out << '\n';
    return kOk;
}

// ---- run41 -----------------------------------------------------------------

struct Run41Options {
    CommonOptions common;
    std::string corpus;
    std::string method;
    std::size_t episodes = 1000;
    double alpha = 10.0;
    double delta = 1e-5;
    std::size_t ensembles = 32;
    std::string metric = "cosine";
    std::size_t pca_dims = 2;
    std::size_t max_steps = 1000;
    std::size_t out_dim = 512;
    std::size_t layers = 1;
    double lr = 1e-3;
    std::string loss = "neglog";
    bool traces = false;
};

int cmd_run41(const Run41Options& o, std::ostream& out, Logger& log) {
    const auto corpus = load_embeddings(o.corpus);
    const auto spec = EpisodeSpec::four_to_one(o.episodes, o.common.seed);

    ExhaustiveConfig cfg;
    cfg.alpha = o.alpha;
    cfg.delta = o.delta;
    cfg.n_ensemble = o.ensembles;
    cfg.metric = parse_metric(o.metric);
    cfg.max_steps = o.max_steps;
    cfg.out_dim = o.out_dim;
    cfg.n_layers = o.layers;
    cfg.lr = o.lr;
    cfg.loss = parse_loss_form(o.loss);
    cfg.sizes = spec.sizes;

    const bool is_fec = o.method == "fec";
    const bool use_pca = o.method.starts_with("pca+");
    const Metric base_metric = o.method.ends_with("euclidean") ? Metric::Euclidean : Metric::Cosine;
    const std::string label = use_pca ? o.method + "@" + std::to_string(o.pca_dims) : o.method;

    json run_config = {{"command", "run41"},   {"corpus", o.corpus},       {"method", o.method},
                       {"episodes", o.episodes}, {"seed", o.common.seed}, {"pca_dims", o.pca_dims}};
    if (is_fec) run_config["fec"] = to_json(cfg);

    const auto outputs = run_episodes(o.episodes, o.common.jobs, log, [&](std::size_t i) {
        const auto ep = sample_episode(corpus, spec, i);
        const auto truth = truth_assignment(ep);
        EpisodeResult r;
        if (is_fec) {
            ExhaustiveConfig local = cfg;
            local.seed = derive_seed(o.common.seed, {kMethodStream, i});
            r = fec_exhaustive(ep.features, local);
        } else {
            const auto idx = run_baseline_41(ep.features, base_metric,
                                             use_pca ? std::optional<std::size_t>(o.pca_dims) : std::nullopt);
            r.method = o.method;
            r.chosen = singleton_assignment(ep.size(), idx);
        }
        r.episode_id = i;
        return finish_episode(r, truth, label, run_config, o.traces && is_fec);
    });

    std::size_t correct = 0;
    for (const auto& e : outputs) correct += e.correct ? 1 : 0;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(outputs.size());
    const std::string summary = "accuracy=" + format_real(accuracy);
    write_outputs(o.common.out_dir, outputs, run_config, summary, o.traces && is_fec);
    out << summary << '\n';
    return kOk;
}

// ---- run80 -----------------------------------------------------------------

struct Run80Options {
    CommonOptions common;
    std::string corpus;
    std::string method;
    std::size_t episodes = 1000;
    std::size_t classes = 5;
    std::size_t per_cluster = 16;
    double alpha = 10.0;
    std::size_t ensembles = 5;
    std::size_t candidates = 8;
    std::size_t t_refine = 4;
    std::size_t t_fine = 64;
    double gamma = 0.1;
    std::string metric = "cosine";
    std::size_t pca_dims = 16;
    std::vector<std::string> ablate;
    std::size_t out_dim = 512;
    std::size_t layers = 2;
    double lr = 1e-3;
    std::string loss = "neglog";
    bool traces = false;
};

int cmd_run80(const Run80Options& o, std::ostream& out, Logger& log) {
    const auto corpus = load_embeddings(o.corpus);
    const auto spec = EpisodeSpec::balanced(o.classes, o.per_cluster, o.episodes, o.common.seed);
    const Metric metric = parse_metric(o.metric);

    IterativeConfig cfg;
    cfg.alpha = o.alpha;
    cfg.n_ensemble = o.ensembles;
    cfg.n_candidates = o.candidates;
    cfg.t_refine = o.t_refine;
    cfg.t_fine = o.t_fine;
    cfg.gamma = o.gamma;
    cfg.metric = metric;
    cfg.base = BaseClusterer::SinkhornKMeans;
    cfg.out_dim = o.out_dim;
    cfg.n_layers = o.layers;
    cfg.lr = o.lr;
    cfg.loss = parse_loss_form(o.loss);
    std::string suffix;
    for (const auto& a : o.ablate) {
        if (a == "select_best") cfg.ablations.select_best = false;
        else if (a == "refine") cfg.ablations.refine = false;
        else if (a == "reinit") cfg.ablations.reinit = false;
        suffix += (suffix.empty() ? "" : ",") + ("-" + a);
    }

    const bool is_fec = o.method == "fec+sinkhorn";
    std::string label = o.method;
    if (o.method == "pca+sinkhorn") label += "@" + std::to_string(o.pca_dims);
    if (is_fec && !suffix.empty()) label += "[" + suffix + "]";

    json run_config = {{"command", "run80"},     {"corpus", o.corpus},       {"method", o.method},
                       {"episodes", o.episodes}, {"seed", o.common.seed},    {"classes", o.classes},
                       {"per_cluster", o.per_cluster}, {"metric", o.metric}, {"gamma", o.gamma},
                       {"pca_dims", o.pca_dims}};
    if (is_fec) run_config["fec"] = to_json(cfg);

    const auto outputs = run_episodes(o.episodes, o.common.jobs, log, [&](std::size_t i) {
        const auto ep = sample_episode(corpus, spec, i);
        const auto truth = truth_assignment(ep);
        const std::uint64_t seed = derive_seed(o.common.seed, {kMethodStream, i});
        EpisodeResult r;
        if (is_fec) {
            IterativeConfig local = cfg;
            local.seed = seed;
            r = fec_iterative(ep.features, o.classes, local);
        } else {
            ClusterMethod m = ClusterMethod::SinkhornKMeans;
            if (o.method == "kmeans") m = ClusterMethod::KMeans;
            if (o.method == "pca+sinkhorn") m = ClusterMethod::PcaSinkhornKMeans;
            r.method = o.method;
            r.chosen = run_baseline_cluster(ep.features, o.classes, m, metric,
                                            m == ClusterMethod::PcaSinkhornKMeans ? std::optional(o.pca_dims)
                                                                                  : std::nullopt,
                                            o.gamma, seed);
        }
        r.episode_id = i;
        return finish_episode(r, truth, label, run_config, o.traces && is_fec);
    });

    double ari_sum = 0.0;
    double nmi_sum = 0.0;
    for (const auto& e : outputs) {
        ari_sum += e.ari;
        nmi_sum += e.nmi;
    }
    const double n = static_cast<double>(outputs.size());
    const std::string summary = "ari=" + format_real(ari_sum / n) + " nmi=" + format_real(nmi_sum / n);
    write_outputs(o.common.out_dir, outputs, run_config, summary, o.traces && is_fec);
    out << summary << '\n';
    return kOk;
}

// ---- report ----------------------------------------------------------------

struct ReportOptions {
    std::string in_dir;
    std::string curves;
    std::string table;
};

int cmd_report(const ReportOptions& o, std::ostream& out) {
    const auto report = load_report(o.in_dir);
    std::ostringstream table;
    write_table(table, report);
    out << table.str();
    if (!o.table.empty()) write_file(o.table, table.str());
    if (!o.curves.empty()) {
        std::ostringstream curves;
        write_curves(curves, report);
        write_file(o.curves, curves.str());
    }
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-example clustering toolkit"};
    app.name("fec");
    app.require_subcommand(1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic labeled embedding corpus");
    gen_cmd->add_option("--classes", gen.spec.n_classes)->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--per-class", gen.spec.per_class)->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--dim", gen.spec.dim)->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--sep", gen.spec.sep)->capture_default_str()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--noise", gen.spec.noise)->capture_default_str()->check(CLI::NonNegativeNumber);
    gen_cmd->add_option("--seed", gen.spec.seed)->capture_default_str();
    gen_cmd->add_option("--out", gen.out, "Output embedding file")->required();
    gen_cmd->add_option("--format", gen.format)->capture_default_str()->check(CLI::IsMember({"text", "binary"}));

    Run41Options r41;
    auto* r41_cmd = app.add_subcommand("run41", "4:1 clustering episodes (find the singleton)");
    add_common(r41_cmd, r41.common);
    r41_cmd->add_option("--corpus", r41.corpus, "Labeled embedding file")->required();
    r41_cmd->add_option("--method", r41.method)
        ->required()
        ->check(CLI::IsMember({"euclidean", "cosine", "pca+euclidean", "pca+cosine", "fec"}));
    r41_cmd->add_option("--episodes", r41.episodes)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--alpha", r41.alpha, "Softmax temperature")->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--delta", r41.delta, "Early-stop threshold (<= 0 disables)")->capture_default_str();
    r41_cmd->add_option("--ensembles", r41.ensembles)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--metric", r41.metric)->capture_default_str()->check(CLI::IsMember({"cosine", "euclidean"}));
    r41_cmd->add_option("--pca-dims", r41.pca_dims)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--max-steps", r41.max_steps)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--out-dim", r41.out_dim)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--layers", r41.layers)->capture_default_str()->check(CLI::Range(1, 2));
    r41_cmd->add_option("--lr", r41.lr)->capture_default_str()->check(CLI::PositiveNumber);
    r41_cmd->add_option("--loss", r41.loss)->capture_default_str()->check(CLI::IsMember({"neglog", "literal"}));
    r41_cmd->add_flag("--traces", r41.traces, "Write per-step loss traces to traces.csv");

    Run80Options r80;
    auto* r80_cmd = app.add_subcommand("run80", "Balanced clustering episodes (80 examples into 5 clusters)");
    add_common(r80_cmd, r80.common);
    r80_cmd->add_option("--corpus", r80.corpus, "Labeled embedding file")->required();
    r80_cmd->add_option("--method", r80.method)
        ->required()
        ->check(CLI::IsMember({"kmeans", "sinkhorn", "pca+sinkhorn", "fec+sinkhorn"}));
    r80_cmd->add_option("--episodes", r80.episodes)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--classes", r80.classes)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--per-cluster", r80.per_cluster)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--alpha", r80.alpha)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--ensembles", r80.ensembles)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--candidates", r80.candidates)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--t-refine", r80.t_refine)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--t-fine", r80.t_fine)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--gamma", r80.gamma)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--metric", r80.metric)->capture_default_str()->check(CLI::IsMember({"cosine", "euclidean"}));
    r80_cmd->add_option("--pca-dims", r80.pca_dims)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--ablate", r80.ablate, "Disable select_best, refine and/or reinit")
        ->delimiter(',')
        ->check(CLI::IsMember({"select_best", "refine", "reinit"}));
    r80_cmd->add_option("--out-dim", r80.out_dim)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--layers", r80.layers)->capture_default_str()->check(CLI::Range(1, 2));
    r80_cmd->add_option("--lr", r80.lr)->capture_default_str()->check(CLI::PositiveNumber);
    r80_cmd->add_option("--loss", r80.loss)->capture_default_str()->check(CLI::IsMember({"neglog", "literal"}));
    r80_cmd->add_flag("--traces", r80.traces, "Write per-step loss traces to traces.csv");

    ReportOptions rep;
    auto* rep_cmd = app.add_subcommand("report", "Aggregate stored episode results");
    rep_cmd->add_option("--in", rep.in_dir, "Result directory (searched recursively)")->required();
    rep_cmd->add_option("--curves", rep.curves, "Write per-step curves CSV here");
    rep_cmd->add_option("--table", rep.table, "Also write the text table here");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    Logger log(err);
    try {
        if (gen_cmd->parsed()) return cmd_gen(gen, out);
        if (r41_cmd->parsed()) return cmd_run41(r41, out, log);
        if (r80_cmd->parsed()) {
            if (r80.t_refine > r80.t_fine) {
                err << "--t-refine must not exceed --t-fine\n";
                return kUsage;
            }
            return cmd_run80(r80, out, log);
        }
        if (rep_cmd->parsed()) return cmd_report(rep, out);
    } catch (const std::exception& e) {
        log.log(Level::Error, e.what());
        return kFailure;
    }
    return kUsage;
}

int main_entry(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace fec::cli
