#include "fec/episodes.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fec/errors.hpp"
#include "fec/rng.hpp"

namespace fec {

namespace {

constexpr std::string_view kTextMagic = "fecemb";
constexpr std::string_view kBinaryMagic = "FECEMB01________";

std::string line_error(std::string_view source, std::size_t line, const std::string& msg) {
    return std::string(source) + ":" + std::to_string(line) + ": " + msg;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    auto [ptr, ec] = std::from_chars(first, first + s.size(), out);
    return ec == std::errc() && ptr == first + s.size();
}

std::size_t header_field(std::string_view token, std::string_view key, std::string_view source) {
    if (token.substr(0, key.size()) != key) {
        throw ParseError(line_error(source, 1, "malformed header: expected '" + std::string(key) + "<value>'"));
    }
    std::size_t v = 0;
    if (!parse_number(token.substr(key.size()), v)) {
        throw ParseError(line_error(source, 1, "malformed header value in '" + std::string(token) + "'"));
    }
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("format_double: to_chars failed");
    return {buf, ptr};
}

template <typename T>
void put_le(std::string& out, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view data, std::size_t& pos, std::string_view source) {
    if (pos + sizeof(T) > data.size()) throw ParseError(std::string(source) + ": truncated binary embedding file");
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, data.data() + pos, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    pos += sizeof(T);
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

EmbeddingSet parse_binary(std::string_view data, std::string_view source) {
    std::size_t pos = kBinaryMagic.size();
    const auto n = get_le<std::uint64_t>(data, pos, source);
    const auto d = get_le<std::uint64_t>(data, pos, source);
    const auto labeled = get_le<std::uint8_t>(data, pos, source);
    if (labeled > 1) throw ParseError(std::string(source) + ": labeled flag must be 0 or 1");
    // Each row needs at least 16 + 8 * D bytes; bound N before allocating.
    if (d == 0 || n > data.size() / (16 + 8 * d)) throw ParseError(std::string(source) + ": inconsistent N/D in header");

    EmbeddingSet set;
    set.source = std::string(source);
    set.features = Matrix(n, d);
    if (labeled) set.labels.emplace();
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto len = get_le<std::uint64_t>(data, pos, source);
        if (pos + len > data.size()) throw ParseError(std::string(source) + ": truncated id");
        set.ids.emplace_back(data.substr(pos, len));
        pos += len;
        const auto label = get_le<std::int64_t>(data, pos, source);
        if (labeled) {
            if (label < 0) throw ParseError(std::string(source) + ": negative label in labeled file");
            set.labels->push_back(static_cast<int>(label));
        }
        for (std::uint64_t j = 0; j < d; ++j) set.features(i, j) = get_le<double>(data, pos, source);
    }
    if (pos != data.size()) throw ParseError(std::string(source) + ": trailing bytes after last example");
    try {
        set.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string(source) + ": " + e.what());
    }
    return set;
}

std::string format_binary(const EmbeddingSet& set) {
    std::string out(kBinaryMagic);
    put_le<std::uint64_t>(out, set.size());
    put_le<std::uint64_t>(out, set.dim());
    put_le<std::uint8_t>(out, set.labels ? 1 : 0);
    for (std::size_t i = 0; i < set.size(); ++i) {
        put_le<std::uint64_t>(out, set.ids[i].size());
        out += set.ids[i];
        put_le<std::int64_t>(out, set.labels ? (*set.labels)[i] : -1);
        for (double v : set.features.row(i)) put_le<double>(out, v);
    }
    return out;
}

}  // namespace

void EmbeddingSet::validate() const {
    if (ids.empty()) throw std::invalid_argument("embedding set is empty");
    if (features.rows() != ids.size()) throw std::invalid_argument("feature rows do not match id count");
    if (features.cols() == 0) throw std::invalid_argument("feature dimension must be >= 1");
    if (labels && labels->size() != ids.size()) throw std::invalid_argument("label count does not match id count");
    if (labels && std::any_of(labels->begin(), labels->end(), [](int l) { return l < 0; }))
        throw std::invalid_argument("labels must be non-negative");
    if (!features.all_finite()) throw std::invalid_argument("non-finite feature value");
    std::set<std::string_view> seen;
    for (const auto& id : ids) {
        if (id.empty()) throw std::invalid_argument("empty id");
        if (!seen.insert(id).second) throw std::invalid_argument("duplicate id '" + id + "'");
    }
}

EmbeddingSet parse_embeddings_text(std::string_view text, std::string_view source) {
    auto lines = split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw ParseError(line_error(source, 1, "missing header"));

    const auto header = split(lines[0], ' ');
    if (header.size() != 5 || header[0] != kTextMagic || header[1] != "v1") {
        throw ParseError(line_error(source, 1, "malformed header, expected 'fecemb v1 n=<N> d=<D> labeled=<0|1>'"));
    }
    const std::size_t n = header_field(header[2], "n=", source);
    const std::size_t d = header_field(header[3], "d=", source);
    const std::size_t labeled = header_field(header[4], "labeled=", source);
    if (labeled > 1) throw ParseError(line_error(source, 1, "labeled must be 0 or 1"));
    if (d == 0) throw ParseError(line_error(source, 1, "d must be >= 1"));
    if (lines.size() - 1 != n) {
        throw ParseError(line_error(source, 1, "header declares n=" + std::to_string(n) + " but file has " +
                                                   std::to_string(lines.size() - 1) + " rows"));
    }

    EmbeddingSet set;
    set.source = std::string(source);
    set.features = Matrix(n, d);
    if (labeled) set.labels.emplace();
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t line_no = i + 2;
        const auto fields = split(lines[i + 1], ',');
        if (fields.size() != d + 2) {
            throw ParseError(line_error(source, line_no, "expected " + std::to_string(d + 2) + " fields, got " +
                                                             std::to_string(fields.size())));
        }
        if (fields[0].empty()) throw ParseError(line_error(source, line_no, "empty id"));
        if (!seen.insert(fields[0]).second)
            throw ParseError(line_error(source, line_no, "duplicate id '" + std::string(fields[0]) + "'"));
        set.ids.emplace_back(fields[0]);
        if (labeled) {
            int label = 0;
            if (!parse_number(fields[1], label) || label < 0)
                throw ParseError(line_error(source, line_no, "invalid label '" + std::string(fields[1]) + "'"));
            set.labels->push_back(label);
        } else if (fields[1] != "-") {
            throw ParseError(line_error(source, line_no, "unlabeled file must use '-' in the label column"));
        }
        for (std::size_t j = 0; j < d; ++j) {
            double v = 0.0;
            if (!parse_number(fields[j + 2], v) || !std::isfinite(v)) {
                throw ParseError(line_error(source, line_no, "invalid feature value '" + std::string(fields[j + 2]) + "'"));
            }
            set.features(i, j) = v;
        }
    }
    return set;
}

std::string format_embeddings_text(const EmbeddingSet& set) {
    set.validate();
    std::string out = "fecemb v1 n=" + std::to_string(set.size()) + " d=" + std::to_string(set.dim()) +
                      " labeled=" + (set.labels ? "1" : "0") + "\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& id = set.ids[i];
        if (id.find_first_of(",\n\r") != std::string::npos)
            throw std::invalid_argument("id '" + id + "' contains a comma or line break");
        out += id;
        out += ',';
        out += set.labels ? std::to_string((*set.labels)[i]) : "-";
        for (double v : set.features.row(i)) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    if (data.starts_with(kBinaryMagic)) return parse_binary(data, path.string());
    return parse_embeddings_text(data, path.string());
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path, EmbeddingFormat format) {
    set.validate();
    const std::string payload = format == EmbeddingFormat::Text ? format_embeddings_text(set) : format_binary(set);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write embedding file " + path.string());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

EpisodeSpec EpisodeSpec::four_to_one(std::size_t n_episodes, std::uint64_t seed) {
    return {EpisodeKind::FourToOne, 2, {4, 1}, n_episodes, seed};
}

EpisodeSpec EpisodeSpec::balanced(std::size_t n_clusters, std::size_t per_cluster, std::size_t n_episodes,
                                  std::uint64_t seed) {
    return {EpisodeKind::Balanced, n_clusters, std::vector<std::size_t>(n_clusters, per_cluster), n_episodes, seed};
}

void EpisodeSpec::validate() const {
    if (sizes.size() != n_clusters || n_clusters == 0) throw std::invalid_argument("episode spec: sizes must have K entries");
    if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end())
        throw std::invalid_argument("episode spec: cluster sizes must be positive");
    if (kind == EpisodeKind::FourToOne && sizes != std::vector<std::size_t>{4, 1})
        throw std::invalid_argument("episode spec: 4:1 episodes need sizes [4, 1]");
    if (kind == EpisodeKind::Balanced && std::adjacent_find(sizes.begin(), sizes.end(), std::not_equal_to<>()) != sizes.end())
        throw std::invalid_argument("episode spec: balanced episodes need equal sizes");
}

EmbeddingSet sample_episode(const EmbeddingSet& corpus, const EpisodeSpec& spec, std::size_t episode_index) {
    spec.validate();
    if (!corpus.labels) throw std::invalid_argument("sample_episode: corpus is unlabeled");

    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < corpus.size(); ++i) by_class[(*corpus.labels)[i]].push_back(i);
    const std::size_t need = *std::max_element(spec.sizes.begin(), spec.sizes.end());
    std::vector<int> eligible;  // ascending class ids
    for (auto& [label, rows] : by_class) {
        std::sort(rows.begin(), rows.end(),
                  [&](std::size_t a, std::size_t b) { return corpus.ids[a] < corpus.ids[b]; });
        if (rows.size() >= need) eligible.push_back(label);
    }
    if (eligible.size() < spec.n_clusters) {
        throw std::invalid_argument("sample_episode: need " + std::to_string(spec.n_clusters) + " classes with >= " +
                                    std::to_string(need) + " examples, corpus has " +
                                    std::to_string(eligible.size()));
    }

    Rng rng(derive_seed(spec.seed, {episode_index}));
    for (std::size_t i = 0; i < spec.n_clusters; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < spec.n_clusters; ++c) {
        auto pool = by_class.at(eligible[c]);
        for (std::size_t i = 0; i < spec.sizes[c]; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
            std::swap(pool[i], pool[j]);
            rows.push_back(pool[i]);
        }
    }
    for (std::size_t i = rows.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(rows[i - 1], rows[j]);
    }

    EmbeddingSet ep;
    ep.source = corpus.source + "#episode=" + std::to_string(episode_index);
    ep.features = select_rows(corpus.features, rows);
    ep.labels.emplace();
    for (std::size_t r : rows) {
        ep.ids.push_back(corpus.ids[r]);
        ep.labels->push_back((*corpus.labels)[r]);
    }
    return ep;
}

ClusterAssignment truth_assignment(const EmbeddingSet& set) {
    if (!set.labels) throw std::invalid_argument("truth_assignment: set is unlabeled");
    return ClusterAssignment::from_labels(*set.labels);
}

EmbeddingSet gen_synthetic(const SyntheticSpec& spec) {
    if (spec.n_classes == 0 || spec.per_class == 0 || spec.dim == 0)
        throw std::invalid_argument("gen_synthetic: classes, per-class and dim must be >= 1");
    if (!(spec.sep > 0.0)) throw std::invalid_argument("gen_synthetic: sep must be positive");
    if (!(spec.noise >= 0.0)) throw std::invalid_argument("gen_synthetic: noise must be non-negative");

    Rng rng(spec.seed);
    Matrix centers(spec.n_classes, spec.dim);
    std::vector<double> v(spec.dim);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            for (double& x : v) x = rng.normal();
            const double len = norm(v);
            if (len == 0.0) continue;
            for (double& x : v) x /= len;
            placed = true;
            for (std::size_t p = 0; p < c && placed; ++p)
                if (distance(v, centers.row(p), Metric::Euclidean) < spec.sep) placed = false;
        }
        if (!placed) {
            throw std::runtime_error("gen_synthetic: could not place class " + std::to_string(c) +
                                     " at separation " + format_double(spec.sep) + " within 1000 tries");
        }
        std::copy(v.begin(), v.end(), centers.row(c).begin());
    }

    EmbeddingSet set;
    set.source = "synthetic:classes=" + std::to_string(spec.n_classes) + ",per_class=" + std::to_string(spec.per_class) +
                 ",dim=" + std::to_string(spec.dim) + ",sep=" + format_double(spec.sep) +
                 ",noise=" + format_double(spec.noise) + ",seed=" + std::to_string(spec.seed);
    set.features = Matrix(spec.n_classes * spec.per_class, spec.dim);
    set.labels.emplace();
    char id[48];
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i) {
            const std::size_t row = c * spec.per_class + i;
            std::snprintf(id, sizeof(id), "c%04zu_%05zu", c, i);
            set.ids.emplace_back(id);
            set.labels->push_back(static_cast<int>(c));
            auto dst = set.features.row(row);
            const auto center = centers.row(c);
            for (std::size_t j = 0; j < spec.dim; ++j) dst[j] = center[j] + spec.noise * rng.normal();
        }
    }
    return set;
}

}  // namespace fec
