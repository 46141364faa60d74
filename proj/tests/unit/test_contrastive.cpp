#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fec/contrastive.hpp"
#include "fec/rng.hpp"
#include "support/oracles.hpp"

using fec::ClusterAssignment;
using fec::ContrastiveHead;
using fec::LossForm;
using fec::LossOptions;
using fec::Matrix;
using fec::Metric;

namespace {

ContrastiveHead identity_head(std::size_t dim) {
    ContrastiveHead h;
    fec::DenseLayer layer{Matrix(dim, dim), std::vector<double>(dim, 0.0)};
    for (std::size_t i = 0; i < dim; ++i) layer.weight(i, i) = 1.0;
    h.layers.push_back(layer);
    return h;
}

// Both cluster centers sit at the origin, so every example is equidistant
// from the two centers.
struct Equidistant {
    Matrix x{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 2.0}, {0.0, -2.0}};
    ClusterAssignment a = ClusterAssignment::from_labels(std::vector<int>{0, 0, 1, 1});
};

}  // namespace

TEST(Loss, EquidistantCentersGiveLogTwo) {
    Equidistant e;
    const auto r = fec::loss_and_grad(identity_head(2), e.x, e.a, {10.0, Metric::Euclidean, LossForm::NegLog});
    // Each term cancels alpha * d = 20 against itself: a few ulps of 20.
    const double tol = 4.0 * 20.0 * std::numeric_limits<double>::epsilon();
    EXPECT_NEAR(r.loss, std::log(2.0), tol);
    for (double v : r.per_example) EXPECT_NEAR(v, std::log(2.0), tol);
    const auto lit = fec::loss_and_grad(identity_head(2), e.x, e.a, {10.0, Metric::Euclidean, LossForm::Literal});
    EXPECT_NEAR(lit.loss, 0.5, 1e-15);
}

TEST(Loss, TinyTemperatureApproachesLogK) {
    fec::Rng rng(1);
    const Matrix x = oracle::random_matrix(9, 4, rng);
    const auto a = ClusterAssignment::from_labels(std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2});
    auto head = fec::init_head(4, 6, 2, 3);
    // Positive biases keep every output row away from zero.
    for (auto& layer : head.layers)
        for (double& b : layer.bias) b = 0.5;
    for (Metric m : {Metric::Euclidean, Metric::Cosine}) {
        const auto r = fec::loss_and_grad(head, x, a, {1e-9, m, LossForm::NegLog});
        EXPECT_NEAR(r.loss, std::log(3.0), 1e-7);
    }
}

TEST(Loss, HandComputedEuclideanValue) {
    // Clusters {0, 2} and {4}: centers 1 and 4 on a line, alpha = 1.
    const Matrix x{{0.0}, {2.0}, {4.0}};
    const auto a = ClusterAssignment::from_labels(std::vector<int>{0, 0, 1});
    const auto r = fec::loss_and_grad(identity_head(1), x, a, {1.0, Metric::Euclidean, LossForm::NegLog});
    auto term = [](double own, double other) { return -std::log(std::exp(-own) / (std::exp(-own) + std::exp(-other))); };
    const double expected = (term(1.0, 4.0) + term(1.0, 2.0) + term(0.0, 3.0)) / 3.0;
    EXPECT_NEAR(r.loss, expected, 1e-15);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
    fec::Rng rng(2);
    for (int t = 0; t < 40; ++t) {
        const std::size_t k = 2 + rng.below(2);
        const std::size_t n = k + rng.below(9 - k);
        const std::size_t d = 2 + rng.below(5);
        const std::size_t out = 2 + rng.below(5);
        const std::size_t layers = 1 + rng.below(2);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i < k ? i : rng.below(k));
        const auto a = ClusterAssignment::from_labels(labels);
        const Matrix x = oracle::random_matrix(n, d, rng);
        fec::ContrastiveHead head = fec::init_head(d, out, layers, rng.next_u64());
        for (auto& layer : head.layers)
            for (double& b : layer.bias) b = 0.1 * rng.normal();
        const LossOptions opts{0.5 + 10.0 * rng.uniform(), t % 2 ? Metric::Cosine : Metric::Euclidean,
                               t % 4 < 2 ? LossForm::NegLog : LossForm::Literal};
        const auto check = oracle::check_gradients(head, x, a, opts);
        EXPECT_LT(check.worst_rel, 1e-5) << "config " << t;
        EXPECT_GT(check.checked, 0u);
    }
}

TEST(Loss, BufferReuseMatchesFreshEvaluation) {
    fec::Rng rng(3);
    fec::LossResult reused;
    for (int t = 0; t < 6; ++t) {
        const std::size_t n = 4 + 2 * static_cast<std::size_t>(t);
        const std::size_t layers = 1 + static_cast<std::size_t>(t % 2);
        const Matrix x = oracle::random_matrix(n, 3, rng);
        std::vector<int> labels(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
        const auto a = ClusterAssignment::from_labels(labels);
        const auto head = fec::init_head(3, 4 + static_cast<std::size_t>(t), layers, 7);
        const auto fresh = fec::loss_and_grad(head, x, a, {});
        fec::loss_and_grad(head, x, a, {}, reused);
        EXPECT_EQ(fresh.loss, reused.loss);
        ASSERT_EQ(fresh.grads.size(), reused.grads.size());
        for (std::size_t l = 0; l < fresh.grads.size(); ++l) {
            EXPECT_EQ(fresh.grads[l].weight, reused.grads[l].weight);
            EXPECT_EQ(fresh.grads[l].bias, reused.grads[l].bias);
        }
    }
}

TEST(Loss, Errors) {
    Equidistant e;
    const auto head = identity_head(2);
    EXPECT_THROW(fec::loss_and_grad(head, e.x, e.a, {0.0, Metric::Euclidean, LossForm::NegLog}),
                 std::invalid_argument);
    const auto padded = ClusterAssignment::from_labels(std::vector<int>{0, 0, 1, 1}, 3);
    EXPECT_THROW(fec::loss_and_grad(head, e.x, padded, {}), std::invalid_argument);
    // Centers at the origin have no direction under the cosine metric.
    EXPECT_THROW(fec::loss_and_grad(head, e.x, e.a, {10.0, Metric::Cosine, LossForm::NegLog}),
                 std::invalid_argument);
    const Matrix wide(4, 3, 1.0);
    EXPECT_THROW(fec::loss_and_grad(head, wide, e.a, {}), std::invalid_argument);
    EXPECT_THROW(fec::parse_loss_form("hinge"), std::invalid_argument);
    EXPECT_EQ(fec::parse_loss_form("literal"), LossForm::Literal);
}

TEST(Head, InitIsDeterministicWithHeScale) {
    const auto a = fec::init_head(64, 256, 2, 5);
    const auto b = fec::init_head(64, 256, 2, 5);
    const auto c = fec::init_head(64, 256, 2, 6);
    EXPECT_EQ(a.layers[0].weight, b.layers[0].weight);
    EXPECT_NE(a.layers[0].weight, c.layers[0].weight);
    ASSERT_EQ(a.n_layers(), 2u);
    EXPECT_EQ(a.layers[0].weight.rows(), 256u);  // hidden width defaults to the output width
    EXPECT_EQ(a.out_dim(), 256u);
    double s2 = 0.0;
    for (double w : a.layers[0].weight.data()) s2 += w * w;
    EXPECT_NEAR(s2 / static_cast<double>(a.layers[0].weight.data().size()), 2.0 / 64.0, 0.002);
    for (double v : a.layers[0].bias) EXPECT_EQ(v, 0.0);
    const auto narrow = fec::init_head(fec::HeadShape{8, 16, 2, 4}, 1);
    EXPECT_EQ(narrow.layers[0].weight.rows(), 4u);
    EXPECT_THROW(fec::init_head(8, 16, 3, 1), std::invalid_argument);
}

TEST(Head, ForwardIsAffineThenRectified) {
    ContrastiveHead h;
    h.layers.push_back({Matrix{{1.0, -1.0}, {0.5, 0.5}}, {0.0, -2.0}});
    h.layers.push_back({Matrix{{1.0, 1.0}}, {0.25}});
    const Matrix x{{2.0, 1.0}};
    // hidden = relu([1, -0.5]) = [1, 0]; out = 1 + 0 + 0.25
    const Matrix z = fec::forward(h, x);
    EXPECT_DOUBLE_EQ(z(0, 0), 1.25);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    auto head = fec::init_head(3, 4, 1, 1);
    const auto before = head;
    auto state = fec::AdamState::for_head(head, 1e-3);
    fec::HeadGradients g(1);
    g[0].weight = Matrix(4, 3, 0.0);
    g[0].bias = {0.5, -2.0, 0.0, 1e-3};
    g[0].weight(1, 2) = -7.0;
    fec::adam_step(head, state, g);
    EXPECT_NEAR(head.layers[0].weight(1, 2) - before.layers[0].weight(1, 2), 1e-3, 1e-9);
    EXPECT_NEAR(head.layers[0].bias[0], -1e-3, 1e-9);
    EXPECT_NEAR(head.layers[0].bias[1], 1e-3, 1e-9);
    EXPECT_EQ(head.layers[0].bias[2], 0.0);
    EXPECT_EQ(head.layers[0].weight(0, 0), before.layers[0].weight(0, 0));
    EXPECT_EQ(state.t, 1u);
    fec::HeadGradients wrong(1);
    wrong[0].weight = Matrix(3, 3, 0.0);
    wrong[0].bias = std::vector<double>(4, 0.0);
    EXPECT_THROW(fec::adam_step(head, state, wrong), std::invalid_argument);
}

TEST(Training, LossFallsOnSeparableClusters) {
    fec::Rng rng(4);
    Matrix x(12, 5);
    std::vector<int> labels(12);
    for (std::size_t i = 0; i < 12; ++i) {
        labels[i] = static_cast<int>(i % 3);
        for (std::size_t d = 0; d < 5; ++d) x(i, d) = (d == i % 3 ? 3.0 : 0.0) + 0.3 * rng.normal();
    }
    const auto a = ClusterAssignment::from_labels(labels);
    auto head = fec::init_head(5, 16, 1, 2);
    auto state = fec::AdamState::for_head(head, 1e-2);
    const LossOptions opts{};
    const double start = fec::loss_and_grad(head, x, a, opts).loss;
    const auto trace = fec::train_steps(head, state, x, a, opts, 300);
    ASSERT_EQ(trace.losses.size(), 300u);
    EXPECT_DOUBLE_EQ(trace.losses.front(), start);
    EXPECT_LT(trace.losses.back(), 0.05);
    EXPECT_LT(trace.losses.back(), trace.losses.front());
    EXPECT_THROW(fec::train_steps(head, state, x, a, opts, 0), std::invalid_argument);
}

TEST(Training, Deterministic) {
    fec::Rng rng(5);
    const Matrix x = oracle::random_matrix(6, 4, rng);
    const auto a = ClusterAssignment::from_labels(std::vector<int>{0, 1, 0, 1, 0, 1});
    auto run = [&] {
        auto head = fec::init_head(4, 8, 2, 11);
        auto state = fec::AdamState::for_head(head);
        return fec::train_steps(head, state, x, a, {}, 20).losses;
    };
    EXPECT_EQ(run(), run());
}
