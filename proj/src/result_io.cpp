#include "fec/result_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fec/errors.hpp"

namespace fec {

using nlohmann::json;

std::string format_real(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

json episode_to_json(const EpisodeResult& r, const std::string& label) {
    json j;
    j["episode_id"] = r.episode_id;
    j["method"] = r.method;
    j["label"] = label;
    j["chosen"] = r.chosen.labels;
    j["chosen_index"] = r.chosen_index ? json(*r.chosen_index) : json(nullptr);
    j["truth"] = r.truth ? json(r.truth->labels) : json(nullptr);

    json candidates = json::array();
    json losses = json::array();
    for (const auto& c : r.candidates) {
        candidates.push_back({{"id", c.id},
                              {"labels", c.assignment.labels},
                              {"initial", c.history.front().second.labels},
                              {"final_loss", c.final_loss}});
        losses.push_back(c.losses);
    }
    j["candidates"] = std::move(candidates);
    j["losses"] = std::move(losses);
    j["rounds"] = r.rounds;
    j["best_by_round"] = r.best_by_round;

    json refinements = json::array();
    for (const auto& e : r.refinements)
        refinements.push_back({{"candidate", e.candidate}, {"round", e.round}, {"member", e.member}});
    j["refinements"] = std::move(refinements);
    j["curve"] = {{"ari", r.curve_ari}, {"correct", r.curve_correct}};

    if (r.metrics) {
        j["metrics"] = {{"ari", r.metrics->ari},
                        {"nmi", r.metrics->nmi},
                        {"correct", r.metrics->correct},
                        {"averaged", r.metrics->averaged},
                        {"nmi_normalization", "arithmetic"}};
    } else {
        j["metrics"] = nullptr;
    }
    j["config"] = r.config;
    return j;
}

void validate_episode_json(const json& j) {
    if (!j.is_object()) throw ParseError("episode payload is not a JSON object");
    for (const char* field : kEpisodeFields) {
        if (!j.contains(field)) throw ParseError(std::string("missing field '") + field + "'");
    }
    if (!j["episode_id"].is_number_unsigned()) throw ParseError("field 'episode_id' must be an unsigned integer");
    if (!j["chosen"].is_array()) throw ParseError("field 'chosen' must be an array");
    if (!j["truth"].is_array() && !j["truth"].is_null()) throw ParseError("field 'truth' must be an array or null");
    if (!j["candidates"].is_array()) throw ParseError("field 'candidates' must be an array");
    if (!j["losses"].is_array()) throw ParseError("field 'losses' must be an array");
    if (!j["config"].is_object()) throw ParseError("field 'config' must be an object");
    const auto& m = j["metrics"];
    if (!m.is_null()) {
        if (!m.is_object() || !m.contains("ari") || !m.contains("nmi") || !m.contains("correct"))
            throw ParseError("field 'metrics' must hold ari, nmi and correct");
    }
    if (m.is_null() != j["truth"].is_null()) throw ParseError("metrics must be present exactly when truth is");
}

void write_trace_header(std::ostream& out) {
    out << "episode_id,candidate_id,member_id,step,loss\n";
}

void write_traces(std::ostream& out, const EpisodeResult& r) {
    for (const auto& t : r.traces) {
        for (std::size_t s = 0; s < t.losses.size(); ++s) {
            out << r.episode_id << ',' << t.candidate << ',' << t.member << ',' << s << ','
                << format_real(t.losses[s]) << '\n';
        }
    }
}

namespace {

struct Accumulator {
    std::vector<double> correct;
    std::vector<double> ari;
    std::vector<double> nmi;
    std::size_t episodes = 0;
};

std::pair<double, double> mean_se(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(v.size()))};
}

std::string episode_label(const json& j) {
    if (j.contains("label") && j["label"].is_string()) return j["label"].get<std::string>();
    if (j.contains("method") && j["method"].is_string()) return j["method"].get<std::string>();
    return "unknown";
}

}  // namespace

Report load_report(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (name.starts_with("episode_") && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::runtime_error("no episode_*.json files under " + dir.string());

    Report report;
    std::map<std::string, Accumulator> groups;
    for (const auto& path : files) {
        std::ifstream in(path);
        json j;
        try {
            j = json::parse(in);
            validate_episode_json(j);
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        auto& acc = groups[episode_label(j)];
        ++acc.episodes;
        if (!j["metrics"].is_null()) {
            const auto& m = j["metrics"];
            acc.correct.push_back(m["correct"].get<bool>() ? 1.0 : 0.0);
            acc.ari.push_back(m["ari"].get<double>());
            acc.nmi.push_back(m["nmi"].get<double>());
        }
        report.episodes.push_back(std::move(j));
    }
    for (const auto& [label, acc] : groups) {
        MethodSummary s;
        s.label = label;
        s.episodes = acc.episodes;
        s.has_metrics = !acc.ari.empty();
        std::tie(s.accuracy, s.accuracy_se) = mean_se(acc.correct);
        std::tie(s.ari, s.ari_se) = mean_se(acc.ari);
        std::tie(s.nmi, s.nmi_se) = mean_se(acc.nmi);
        report.methods.push_back(s);
    }
    return report;
}

void write_table(std::ostream& out, const Report& report) {
    std::size_t width = std::string("method").size();
    for (const auto& m : report.methods) width = std::max(width, m.label.size());
    auto cell = [](double mean, double se) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4) << mean << " +- " << se;
        return s.str();
    };
    out << std::left << std::setw(static_cast<int>(width)) << "method" << "  " << std::right << std::setw(8)
        << "episodes" << "  " << std::setw(18) << "accuracy" << "  " << std::setw(18) << "ari" << "  "
        << std::setw(18) << "nmi" << '\n';
    for (const auto& m : report.methods) {
        out << std::left << std::setw(static_cast<int>(width)) << m.label << "  " << std::right << std::setw(8)
            << m.episodes << "  ";
        if (m.has_metrics) {
            out << std::setw(18) << cell(m.accuracy, m.accuracy_se) << "  " << std::setw(18) << cell(m.ari, m.ari_se)
                << "  " << std::setw(18) << cell(m.nmi, m.nmi_se);
        } else {
            out << std::setw(18) << "-" << "  " << std::setw(18) << "-" << "  " << std::setw(18) << "-";
        }
        out << '\n';
    }
}

void write_curves(std::ostream& out, const Report& report) {
    out << "label,episode_id,candidate,step,loss,selected,running_ari,running_correct\n";
    for (const auto& j : report.episodes) {
        const std::string label = episode_label(j);
        const auto id = j["episode_id"].get<std::size_t>();
        const auto& losses = j["losses"];
        const json empty = json::array();
        const json& best = j.contains("best_by_round") ? j["best_by_round"] : empty;
        const json& ari = j.contains("curve") ? j["curve"]["ari"] : empty;
        const json& correct = j.contains("curve") ? j["curve"]["correct"] : empty;
        for (std::size_t c = 0; c < losses.size(); ++c) {
            for (std::size_t s = 0; s < losses[c].size(); ++s) {
                out << label << ',' << id << ',' << c << ',' << s << ',' << format_real(losses[c][s].get<double>())
                    << ',';
                out << (s < best.size() && best[s].get<std::size_t>() == c ? 1 : 0) << ',';
                if (s < ari.size()) out << format_real(ari[s].get<double>());
                out << ',';
                if (s < correct.size()) out << correct[s].get<int>();
                out << '\n';
            }
        }
    }
}

}  // namespace fec
