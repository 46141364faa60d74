#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fec/fec.hpp"

namespace fec {

// Stable field set of a serialized episode.
inline constexpr const char* kEpisodeFields[] = {"episode_id", "chosen",  "truth",  "candidates",
                                                 "losses",     "metrics", "config"};

nlohmann::json episode_to_json(const EpisodeResult& r, const std::string& label);

// Throws ParseError naming the missing or mistyped field.
void validate_episode_json(const nlohmann::json& j);

// CSV with header episode_id,candidate_id,member_id,step,loss.
void write_trace_header(std::ostream& out);
void write_traces(std::ostream& out, const EpisodeResult& r);

struct MethodSummary {
    std::string label;
    std::size_t episodes = 0;
    double accuracy = 0.0;
    double accuracy_se = 0.0;
    double ari = 0.0;
    double ari_se = 0.0;
    double nmi = 0.0;
    double nmi_se = 0.0;
    bool has_metrics = false;
};

struct Report {
    std::vector<MethodSummary> methods;  // sorted by label
    std::vector<nlohmann::json> episodes;
};

// Loads every episode_*.json below `dir`. Throws ParseError naming the first
// corrupt file, std::runtime_error when none are found.
Report load_report(const std::filesystem::path& dir);

void write_table(std::ostream& out, const Report& report);

// Columns: label,episode_id,candidate,step,loss,selected,running_ari,running_correct.
// One row per (episode, candidate, step).
void write_curves(std::ostream& out, const Report& report);

std::string format_real(double v);

}  // namespace fec
