#include "fec/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace fec {

namespace {

struct Contingency {
    std::vector<std::vector<double>> table;
    std::vector<double> row_sums;
    std::vector<double> col_sums;
    double n = 0.0;
};

std::vector<int> compress(std::span<const int> labels, std::size_t& count) {
    std::map<int, int> ids;
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) {
        auto [it, inserted] = ids.try_emplace(l, static_cast<int>(ids.size()));
        out.push_back(it->second);
    }
    count = ids.size();
    return out;
}

Contingency contingency(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
    if (a.size() < 2) throw std::invalid_argument("label vectors need at least two entries");
    std::size_t ka = 0;
    std::size_t kb = 0;
    const auto ca = compress(a, ka);
    const auto cb = compress(b, kb);
    Contingency c;
    c.table.assign(ka, std::vector<double>(kb, 0.0));
    c.row_sums.assign(ka, 0.0);
    c.col_sums.assign(kb, 0.0);
    for (std::size_t i = 0; i < ca.size(); ++i) {
        c.table[ca[i]][cb[i]] += 1.0;
        c.row_sums[ca[i]] += 1.0;
        c.col_sums[cb[i]] += 1.0;
    }
    c.n = static_cast<double>(a.size());
    return c;
}

double pairs(double x) { return x * (x - 1.0) / 2.0; }

double entropy(const std::vector<double>& counts, double n) {
    double h = 0.0;
    for (double c : counts) {
        if (c > 0.0) h -= (c / n) * std::log(c / n);
    }
    return h;
}

}  // namespace

bool same_partition(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) return false;
    std::size_t ka = 0;
    std::size_t kb = 0;
    return compress(a, ka) == compress(b, kb);
}

double ari(std::span<const int> a, std::span<const int> b) {
    const auto c = contingency(a, b);
    double index = 0.0;
    for (const auto& row : c.table)
        for (double v : row) index += pairs(v);
    double sum_a = 0.0;
    for (double v : c.row_sums) sum_a += pairs(v);
    double sum_b = 0.0;
    for (double v : c.col_sums) sum_b += pairs(v);
    const double expected = sum_a * sum_b / pairs(c.n);
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (index - expected) / (max_index - expected);
}

double nmi(std::span<const int> a, std::span<const int> b) {
    const auto c = contingency(a, b);
    const double ha = entropy(c.row_sums, c.n);
    const double hb = entropy(c.col_sums, c.n);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    double mi = 0.0;
    for (std::size_t i = 0; i < c.table.size(); ++i) {
        for (std::size_t j = 0; j < c.table[i].size(); ++j) {
            const double nij = c.table[i][j];
            if (nij > 0.0) mi += (nij / c.n) * std::log(c.n * nij / (c.row_sums[i] * c.col_sums[j]));
        }
    }
    const double value = mi / (0.5 * (ha + hb));
    return std::max(0.0, std::min(1.0, value));
}

double selection_accuracy(std::span<const SelectionOutcome> outcomes) {
    if (outcomes.empty()) throw std::invalid_argument("selection_accuracy: no outcomes");
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        if (same_partition(o.chosen, o.truth)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

}  // namespace fec
