#include "fec/clustering.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fec/errors.hpp"
#include "fec/rng.hpp"

namespace fec {

ClusterAssignment ClusterAssignment::from_labels(std::span<const int> labels, std::size_t k) {
    std::map<int, int> canon;
    ClusterAssignment a;
    a.labels.reserve(labels.size());
    for (int l : labels) {
        if (l < 0) throw std::invalid_argument("ClusterAssignment: negative label " + std::to_string(l));
        auto [it, inserted] = canon.try_emplace(l, static_cast<int>(canon.size()));
        a.labels.push_back(it->second);
    }
    if (k == 0) k = canon.size();
    if (k < canon.size()) {
        throw std::invalid_argument("ClusterAssignment: " + std::to_string(canon.size()) +
                                    " distinct labels exceed k = " + std::to_string(k));
    }
    a.k = k;
    a.sizes.assign(k, 0);
    for (int l : a.labels) ++a.sizes[static_cast<std::size_t>(l)];
    return a;
}

std::vector<std::size_t> ClusterAssignment::members(std::size_t cluster) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (static_cast<std::size_t>(labels[i]) == cluster) out.push_back(i);
    return out;
}

Matrix seed_centers(const Matrix& x, std::size_t k, Metric metric, Rng& rng) {
    const std::size_t n = x.rows();
    if (k == 0 || k > n) throw std::invalid_argument("seed_centers: need 1 <= k <= N");
    Matrix centers(k, x.cols());
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::size_t pick = static_cast<std::size_t>(rng.below(n));
    for (std::size_t c = 0; c < k; ++c) {
        if (c > 0) {
            double total = 0.0;
            for (double w : best) total += w;
            if (total <= 0.0) {
                pick = static_cast<std::size_t>(rng.below(n));
            } else {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                pick = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += best[i];
                    if (target < acc && best[i] > 0.0) {
                        pick = i;
                        break;
                    }
                }
            }
        }
        std::copy(x.row(pick).begin(), x.row(pick).end(), centers.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            const double d = distance(x.row(i), centers.row(c), metric);
            best[i] = std::min(best[i], d * d);
        }
    }
    return centers;
}

namespace {

double lloyd_cost(std::span<const double> u, std::span<const double> v, Metric metric) {
    const double d = distance(u, v, metric);
    return metric == Metric::Euclidean ? d * d : d;
}

std::vector<std::size_t> equal_sizes(std::size_t n, std::size_t k) {
    return std::vector<std::size_t>(k, n / k);
}

}  // namespace

KMeansRun kmeans_run(const Matrix& x, std::size_t k, Metric metric, std::uint64_t seed, const KMeansOptions& opts) {
    const std::size_t n = x.rows();
    if (k == 0) throw std::invalid_argument("kmeans: k must be >= 1");
    if (k > n) throw std::invalid_argument("kmeans: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));

    Rng rng(seed);
    KMeansRun run;
    Matrix centers = seed_centers(x, k, metric, rng);
    std::vector<int> labels(n, -1);
    std::vector<int> prev;
    std::vector<double> cost(n, 0.0);

    for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t arg = 0;
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = lloyd_cost(x.row(i), centers.row(c), metric);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            labels[i] = static_cast<int>(arg);
            cost[i] = best;
            ++counts[arg];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            std::size_t far = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] < 2) continue;
                if (far == n || cost[i] > cost[far]) far = i;
            }
            --counts[static_cast<std::size_t>(labels[far])];
            labels[far] = static_cast<int>(c);
            cost[far] = 0.0;
            counts[c] = 1;
            std::copy(x.row(far).begin(), x.row(far).end(), centers.row(c).begin());
        }
        run.objective.push_back(std::accumulate(cost.begin(), cost.end(), 0.0));
        run.iterations = iter + 1;
        if (labels == prev) break;
        prev = labels;

        centers = Matrix(k, x.cols());
        for (std::size_t i = 0; i < n; ++i) {
            auto dst = centers.row(static_cast<std::size_t>(labels[i]));
            const auto src = x.row(i);
            for (std::size_t j = 0; j < x.cols(); ++j) dst[j] += src[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double inv = 1.0 / static_cast<double>(counts[c]);
            for (double& v : centers.row(c)) v *= inv;
        }
    }

    run.assignment = ClusterAssignment::from_labels(labels, k);
    // Reorder centers to follow the canonical cluster ids.
    run.centers = Matrix(k, x.cols());
    std::vector<bool> placed(k, false);
    for (std::size_t i = 0; i < n; ++i) {
        const auto canon = static_cast<std::size_t>(run.assignment.labels[i]);
        if (placed[canon]) continue;
        placed[canon] = true;
        const auto src = centers.row(static_cast<std::size_t>(labels[i]));
        std::copy(src.begin(), src.end(), run.centers.row(canon).begin());
    }
    return run;
}

ClusterAssignment kmeans(const Matrix& x, std::size_t k, Metric metric, std::uint64_t seed, const KMeansOptions& opts) {
    return kmeans_run(x, k, metric, seed, opts).assignment;
}

namespace {

// Sweep budgets inside sinkhorn_plan: per annealing stage, and plain sweeps
// at the target gamma before switching to Newton steps.
constexpr std::size_t kStageSweeps = 50;
constexpr std::size_t kPlainSweeps = 200;

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

}  // namespace

namespace {

// Semi-dual in the column potentials g with the row potentials eliminated:
// f_i = eps (log r - lse_j((g_j - C_ij) / eps)). Rows of the implied plan
// sum to r exactly; the gradient in g is the column-marginal residual.
struct SemiDual {
    const Matrix& cost;
    double eps;
    double row_mass;
    double col_mass;

    // Objective value (up to a constant), and optionally the row-softmax.
    double value(const std::vector<double>& g, Matrix* soft = nullptr) const {
        const std::size_t n = cost.rows();
        const std::size_t k = cost.cols();
        std::vector<double> buf(k);
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) buf[j] = (g[j] - cost(i, j)) / eps;
            const double lse = log_sum_exp(buf);
            total -= row_mass * eps * lse;
            if (soft) {
                for (std::size_t j = 0; j < k; ++j) (*soft)(i, j) = std::exp(buf[j] - lse);
            }
        }
        for (double gj : g) total += col_mass * gj;
        return total;
    }
};

// Largest |column sum - col_mass| of the plan r * soft.
double column_violation(const Matrix& soft, double row_mass, double col_mass) {
    double worst = 0.0;
    for (std::size_t j = 0; j < soft.cols(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < soft.rows(); ++i) s += row_mass * soft(i, j);
        worst = std::max(worst, std::abs(s - col_mass));
    }
    return worst;
}

// One damped Newton step on the semi-dual. Returns false when no step
// improves the objective or the residual (converged to rounding).
bool newton_step(const SemiDual& dual, std::vector<double>& g, Matrix& soft) {
    const std::size_t n = soft.rows();
    const std::size_t k = soft.cols();
    if (k < 2) return false;
    // Gradient and negated Hessian, with g_0 pinned (the objective is
    // invariant to a common shift of g).
    const auto m = static_cast<Eigen::Index>(k - 1);
    Eigen::VectorXd grad(m);
    Eigen::MatrixXd curv = Eigen::MatrixXd::Zero(m, m);
    for (std::size_t j = 1; j < k; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += soft(i, j);
        grad(static_cast<Eigen::Index>(j - 1)) = dual.col_mass - dual.row_mass * s;
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t a = 1; a < k; ++a) {
            const auto ia = static_cast<Eigen::Index>(a - 1);
            curv(ia, ia) += soft(i, a);
            for (std::size_t b = 1; b < k; ++b) curv(ia, static_cast<Eigen::Index>(b - 1)) -= soft(i, a) * soft(i, b);
        }
    }
    curv *= dual.row_mass / dual.eps;
    // Tiny ridge keeps the solve defined when whole columns have vanished.
    const double ridge = 1e-300 + 1e-14 * curv.diagonal().cwiseAbs().maxCoeff();
    curv.diagonal().array() += ridge;
    const Eigen::VectorXd step = curv.ldlt().solve(grad);
    if (!step.allFinite()) return false;

    const double f0 = dual.value(g);
    const double r0 = column_violation(soft, dual.row_mass, dual.col_mass);
    const double slope = grad.dot(step);
    std::vector<double> trial(g);
    Matrix trial_soft(n, k);
    for (double t = 1.0; t > 1e-12; t *= 0.5) {
        for (std::size_t j = 1; j < k; ++j) trial[j] = g[j] + t * step(static_cast<Eigen::Index>(j - 1));
        const double f1 = dual.value(trial, &trial_soft);
        const double r1 = column_violation(trial_soft, dual.row_mass, dual.col_mass);
        if (f1 >= f0 + 1e-4 * t * slope || r1 < r0) {
            g = trial;
            soft = trial_soft;
            return true;
        }
    }
    return false;
}

}  // namespace

SoftAssignment sinkhorn_plan(const Matrix& cost, double gamma, const SinkhornOptions& opts) {
    if (!(gamma > 0.0)) throw std::invalid_argument("sinkhorn_plan: gamma must be positive");
    if (cost.rows() == 0 || cost.cols() == 0) throw std::invalid_argument("sinkhorn_plan: empty cost matrix");
    if (!cost.all_finite()) throw std::invalid_argument("sinkhorn_plan: non-finite cost");

    const std::size_t n = cost.rows();
    const std::size_t k = cost.cols();
    const double row_mass = 1.0 / static_cast<double>(n);
    const double col_mass = 1.0 / static_cast<double>(k);
    const double log_row = std::log(row_mass);
    const double log_col = std::log(col_mass);

    // Dual potentials f, g: plan_ij = exp((f_i + g_j - cost_ij) / gamma).
    std::vector<double> f(n, 0.0);
    std::vector<double> g(k, 0.0);
    std::vector<double> buf(std::max(n, k));

    auto sweep = [&](double eps) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) buf[j] = (g[j] - cost(i, j)) / eps;
            f[i] = eps * (log_row - log_sum_exp({buf.data(), k}));
        }
        for (std::size_t j = 0; j < k; ++j) {
            for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost(i, j)) / eps;
            g[j] = eps * (log_col - log_sum_exp({buf.data(), n}));
        }
    };
    // Column marginals are exact after a sweep; only rows can be off.
    auto row_violation = [&](double eps) {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += std::exp((f[i] + g[j] - cost(i, j)) / eps);
            worst = std::max(worst, std::abs(s - row_mass));
        }
        return worst;
    };

    // Anneal the regularization from the cost range down to gamma, warm
    // starting the potentials; plain scaling stalls for gamma << range.
    double lo = cost(0, 0);
    double hi = cost(0, 0);
    for (double c : cost.data()) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    std::vector<double> schedule;
    for (double eps = hi - lo; eps > gamma; eps *= 0.5) schedule.push_back(eps);
    schedule.push_back(gamma);

    std::size_t iters = 0;
    double violation = std::numeric_limits<double>::infinity();
    for (std::size_t stage = 0; stage < schedule.size(); ++stage) {
        const double eps = schedule[stage];
        const bool last = stage + 1 == schedule.size();
        const double stage_tol = last ? opts.tol : std::max(opts.tol, 1e-6 * row_mass);
        const std::size_t stage_cap = last ? kPlainSweeps : kStageSweeps;
        for (std::size_t it = 0; it < stage_cap && iters < opts.max_iters; ++it) {
            sweep(eps);
            ++iters;
            violation = row_violation(eps);
            if (violation < stage_tol) break;
        }
    }

    // Near-integral plans leave the dual almost flat and the sweeps crawl;
    // finish with Newton steps on the column potentials, which reach the
    // same fixed point with exact row marginals.
    bool rows_exact = false;
    if (!(violation < opts.tol) && iters < opts.max_iters) {
        const SemiDual dual{cost, gamma, row_mass, col_mass};
        Matrix soft(n, k);
        dual.value(g, &soft);
        violation = column_violation(soft, row_mass, col_mass);
        while (!(violation < opts.tol) && iters < opts.max_iters) {
            ++iters;
            if (!newton_step(dual, g, soft)) break;
            violation = column_violation(soft, row_mass, col_mass);
        }
        rows_exact = true;
    }
    if (!(violation < opts.tol)) {
        throw ConvergenceError("sinkhorn_plan: marginals off by " + std::to_string(violation) + " after " +
                                   std::to_string(iters) + " iterations",
                               violation);
    }
    if (rows_exact) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) buf[j] = (g[j] - cost(i, j)) / gamma;
            f[i] = gamma * (log_row - log_sum_exp({buf.data(), k}));
        }
    }

    SoftAssignment out;
    out.gamma = gamma;
    out.iterations = iters;
    out.marginal_violation = violation;
    out.plan = Matrix(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            out.plan(i, j) = std::min(1.0, std::exp((f[i] + g[j] - cost(i, j)) / gamma));
    return out;
}

std::vector<int> round_to_columns(const Matrix& plan, std::span<const std::size_t> sizes) {
    const std::size_t n = plan.rows();
    const std::size_t k = plan.cols();
    if (sizes.size() != k) throw std::invalid_argument("round_to_hard: sizes length must equal plan columns");
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != n)
        throw std::invalid_argument("round_to_hard: sizes must sum to N");

    struct Entry {
        double value;
        std::size_t row;
        std::size_t col;
    };
    std::vector<Entry> entries;
    entries.reserve(n * k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) entries.push_back({plan(i, j), i, j});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });

    std::vector<int> labels(n, -1);
    std::vector<std::size_t> capacity(sizes.begin(), sizes.end());
    std::size_t assigned = 0;
    for (const auto& e : entries) {
        if (assigned == n) break;
        if (labels[e.row] >= 0 || capacity[e.col] == 0) continue;
        labels[e.row] = static_cast<int>(e.col);
        --capacity[e.col];
        ++assigned;
    }
    return labels;
}

ClusterAssignment round_to_hard(const Matrix& plan, std::span<const std::size_t> sizes) {
    return ClusterAssignment::from_labels(round_to_columns(plan, sizes), plan.cols());
}

ClusterAssignment sinkhorn_kmeans(const Matrix& x, std::size_t k, Metric metric, double gamma, std::uint64_t seed,
                                  const SinkhornOptions& sk, std::size_t max_iters) {
    const std::size_t n = x.rows();
    if (k == 0 || k > n) throw std::invalid_argument("sinkhorn_kmeans: need 1 <= k <= N");
    if (n % k != 0) {
        throw std::invalid_argument("sinkhorn_kmeans: N = " + std::to_string(n) + " not divisible by k = " +
                                    std::to_string(k));
    }
    Rng rng(seed);
    Matrix centers = seed_centers(x, k, metric, rng);
    const auto sizes = equal_sizes(n, k);
    ClusterAssignment current;
    Matrix cost(n, k);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) cost(i, j) = distance(x.row(i), centers.row(j), metric);
        const auto soft = sinkhorn_plan(cost, gamma, sk);
        auto hard = round_to_hard(soft.plan, sizes);
        if (hard == current) break;
        current = std::move(hard);

        centers = Matrix(k, x.cols());
        for (std::size_t j = 0; j < k; ++j) {
            double mass = 0.0;
            auto dst = centers.row(j);
            for (std::size_t i = 0; i < n; ++i) {
                const double p = soft.plan(i, j);
                mass += p;
                const auto src = x.row(i);
                for (std::size_t d = 0; d < x.cols(); ++d) dst[d] += p * src[d];
            }
            for (double& v : dst) v /= mass;
        }
    }
    return current;
}

std::vector<ClusterAssignment> enumerate_assignments(std::size_t n, std::span<const std::size_t> sizes,
                                                     std::size_t cap) {
    if (n > cap) {
        throw std::invalid_argument("enumerate_assignments: n = " + std::to_string(n) + " exceeds cap " +
                                    std::to_string(cap));
    }
    if (sizes.empty()) throw std::invalid_argument("enumerate_assignments: no cluster sizes");
    if (std::find(sizes.begin(), sizes.end(), std::size_t{0}) != sizes.end())
        throw std::invalid_argument("enumerate_assignments: cluster sizes must be positive");
    if (std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}) != n)
        throw std::invalid_argument("enumerate_assignments: sizes must sum to n");

    // Unopened groups by size. Groups are opened in first-appearance order and
    // a new group picks a distinct size value, so each partition appears once.
    std::map<std::size_t, std::size_t, std::greater<>> unopened;
    for (std::size_t s : sizes) ++unopened[s];

    std::vector<ClusterAssignment> out;
    std::vector<int> labels(n, -1);
    std::vector<std::size_t> group_sizes;
    std::vector<std::size_t> remaining;

    auto recurse = [&](auto&& self, std::size_t item) -> void {
        if (item == n) {
            ClusterAssignment a;
            a.labels = labels;
            a.k = group_sizes.size();
            a.sizes = group_sizes;
            out.push_back(std::move(a));
            return;
        }
        for (std::size_t g = 0; g < remaining.size(); ++g) {
            if (remaining[g] == 0) continue;
            --remaining[g];
            labels[item] = static_cast<int>(g);
            self(self, item + 1);
            ++remaining[g];
        }
        for (auto& [size, count] : unopened) {
            if (count == 0) continue;
            --count;
            group_sizes.push_back(size);
            remaining.push_back(size - 1);
            labels[item] = static_cast<int>(group_sizes.size() - 1);
            self(self, item + 1);
            remaining.pop_back();
            group_sizes.pop_back();
            ++count;
        }
    };
    recurse(recurse, 0);
    return out;
}

Matrix assignment_centers(const Matrix& x, const ClusterAssignment& a) {
    if (a.n() != x.rows()) throw std::invalid_argument("assignment_centers: assignment length != rows");
    Matrix centers(a.k, x.cols());
    for (std::size_t c = 0; c < a.k; ++c) {
        const auto members = a.members(c);
        if (members.empty()) throw std::invalid_argument("assignment_centers: empty cluster " + std::to_string(c));
        const auto mean = row_mean(x, members);
        std::copy(mean.begin(), mean.end(), centers.row(c).begin());
    }
    return centers;
}

double assignment_cost(const Matrix& x, const ClusterAssignment& a, Metric metric) {
    const Matrix centers = assignment_centers(x, a);
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        total += distance(x.row(i), centers.row(static_cast<std::size_t>(a.labels[i])), metric);
    return total;
}

}  // namespace fec
