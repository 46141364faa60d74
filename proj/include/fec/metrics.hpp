#pragma once

#include <span>
#include <vector>

namespace fec {

// One cluster id per example.
using LabelVector = std::vector<int>;

// True when a and b induce the same partition (label-permutation invariant).
bool same_partition(std::span<const int> a, std::span<const int> b);

// Adjusted Rand Index via pair counting on the contingency table.
// Returns 1.0 when the index equals its maximum and its expectation
// (both partitions trivial in the same way).
double ari(std::span<const int> a, std::span<const int> b);

// Mutual information normalized by the arithmetic mean of the two entropies
// (natural log, 0 log 0 = 0). Returns 1.0 when both partitions are a single
// cluster.
double nmi(std::span<const int> a, std::span<const int> b);

struct SelectionOutcome {
    LabelVector chosen;
    LabelVector truth;
};

// Fraction of outcomes whose chosen partition equals the ground truth.
double selection_accuracy(std::span<const SelectionOutcome> outcomes);

}  // namespace fec
