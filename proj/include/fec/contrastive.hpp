#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "fec/clustering.hpp"
#include "fec/linalg.hpp"

namespace fec {

struct DenseLayer {
    Matrix weight;             // out x in
    std::vector<double> bias;  // out
};

// Trainable layers stacked on frozen embeddings: one linear layer, or two
// with a rectifier in between.
struct ContrastiveHead {
    std::vector<DenseLayer> layers;

    std::size_t in_dim() const { return layers.front().weight.cols(); }
    std::size_t out_dim() const { return layers.back().weight.rows(); }
    std::size_t n_layers() const { return layers.size(); }
};

using HeadGradients = std::vector<DenseLayer>;

struct HeadShape {
    std::size_t in_dim = 0;
    std::size_t out_dim = 512;
    std::size_t n_layers = 1;
    std::size_t hidden_dim = 0;  // 0 means out_dim
};

// Weights ~ N(0, 2 / fan_in), biases zero.
ContrastiveHead init_head(const HeadShape& shape, std::uint64_t seed);
ContrastiveHead init_head(std::size_t in_dim, std::size_t out_dim, std::size_t n_layers, std::uint64_t seed);

Matrix forward(const ContrastiveHead& head, const Matrix& x);

// neglog: mean of -log softmax_k(-alpha d(z_i, mu_k)) at the own cluster.
// literal: mean of the own-cluster softmax probability itself.
enum class LossForm { NegLog, Literal };

std::string_view to_string(LossForm f);
LossForm parse_loss_form(std::string_view name);

struct LossOptions {
    double alpha = 10.0;
    Metric metric = Metric::Cosine;
    LossForm form = LossForm::NegLog;
};

struct LossResult {
    double loss = 0.0;
    std::vector<double> per_example;
    HeadGradients grads;
};

// Loss over cluster centers recomputed from the current head output, with
// exact gradients for every head parameter (including the path through the
// centers).
LossResult loss_and_grad(const ContrastiveHead& head, const Matrix& x, const ClusterAssignment& assignment,
                         const LossOptions& opts);
// Same, writing into `out` and reusing its gradient buffers across calls.
void loss_and_grad(const ContrastiveHead& head, const Matrix& x, const ClusterAssignment& assignment,
                   const LossOptions& opts, LossResult& out);

struct AdamState {
    std::vector<DenseLayer> m;
    std::vector<DenseLayer> v;
    std::size_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_head(const ContrastiveHead& head, double lr = 1e-3);
};

void adam_step(ContrastiveHead& head, AdamState& state, const HeadGradients& grads);

struct LossTrace {
    std::size_t candidate = 0;
    std::size_t member = 0;
    std::vector<double> losses;
};

// Full-batch loss_and_grad + adam_step, n_steps times. The recorded loss is
// the one evaluated before each update.
LossTrace train_steps(ContrastiveHead& head, AdamState& state, const Matrix& x, const ClusterAssignment& assignment,
                      const LossOptions& opts, std::size_t n_steps);

}  // namespace fec
