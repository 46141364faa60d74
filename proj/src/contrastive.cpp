#include "fec/contrastive.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fec/rng.hpp"

namespace fec {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using ConstMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Vec>;

ConstMap view(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

ConstVecMap view(const std::vector<double>& v) {
    return {v.data(), static_cast<Eigen::Index>(v.size())};
}

Matrix to_matrix(const RowMat& m) {
    Matrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    Eigen::Map<RowMat>(out.data().data(), m.rows(), m.cols()) = m;
    return out;
}

DenseLayer zeros_like(const DenseLayer& layer) {
    return {Matrix(layer.weight.rows(), layer.weight.cols()), std::vector<double>(layer.bias.size(), 0.0)};
}

void check_head(const ContrastiveHead& head) {
    if (head.layers.empty() || head.layers.size() > 2)
        throw std::invalid_argument("contrastive head must have 1 or 2 layers");
}

struct Activations {
    RowMat pre_hidden;  // two-layer heads only
    RowMat hidden;
    RowMat out;
};

void run_forward(const ContrastiveHead& head, const Matrix& x, Activations& act) {
    check_head(head);
    if (x.cols() != head.in_dim()) {
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) + " columns, head expects " +
                                    std::to_string(head.in_dim()));
    }
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto& first = head.layers.front();
    RowMat& a = head.layers.size() == 1 ? act.out : act.pre_hidden;
    a.resize(n, static_cast<Eigen::Index>(first.weight.rows()));
    a.noalias() = view(x) * view(first.weight).transpose();
    a.rowwise() += view(first.bias).transpose();
    if (head.layers.size() == 1) return;
    const auto& second = head.layers[1];
    act.hidden = act.pre_hidden.cwiseMax(0.0);
    act.out.resize(n, static_cast<Eigen::Index>(second.weight.rows()));
    act.out.noalias() = act.hidden * view(second.weight).transpose();
    act.out.rowwise() += view(second.bias).transpose();
}

// Scratch buffers reused across loss evaluations on the same thread.
struct Workspace {
    Activations act;
    RowMat z_hat;
    RowMat g_z;
    RowMat g_hidden;
};

Workspace& workspace() {
    thread_local Workspace ws;
    return ws;
}

}  // namespace

ContrastiveHead init_head(const HeadShape& shape, std::uint64_t seed) {
    if (shape.n_layers < 1 || shape.n_layers > 2)
        throw std::invalid_argument("init_head: n_layers must be 1 or 2, got " + std::to_string(shape.n_layers));
    if (shape.in_dim == 0 || shape.out_dim == 0) throw std::invalid_argument("init_head: dimensions must be >= 1");
    const std::size_t hidden = shape.hidden_dim == 0 ? shape.out_dim : shape.hidden_dim;

    std::vector<std::pair<std::size_t, std::size_t>> dims;  // (out, in)
    if (shape.n_layers == 1) {
        dims.emplace_back(shape.out_dim, shape.in_dim);
    } else {
        dims.emplace_back(hidden, shape.in_dim);
        dims.emplace_back(shape.out_dim, hidden);
    }
    Rng rng(seed);
    ContrastiveHead head;
    for (auto [out, in] : dims) {
        DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0)};
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (double& w : layer.weight.data()) w = scale * rng.normal();
        head.layers.push_back(std::move(layer));
    }
    return head;
}

ContrastiveHead init_head(std::size_t in_dim, std::size_t out_dim, std::size_t n_layers, std::uint64_t seed) {
    return init_head(HeadShape{in_dim, out_dim, n_layers, 0}, seed);
}

Matrix forward(const ContrastiveHead& head, const Matrix& x) {
    Activations act;
    run_forward(head, x, act);
    return to_matrix(act.out);
}

std::string_view to_string(LossForm f) {
    return f == LossForm::NegLog ? "neglog" : "literal";
}

LossForm parse_loss_form(std::string_view name) {
    if (name == "neglog") return LossForm::NegLog;
    if (name == "literal") return LossForm::Literal;
    throw std::invalid_argument("unknown loss form: " + std::string(name));
}

LossResult loss_and_grad(const ContrastiveHead& head, const Matrix& x, const ClusterAssignment& assignment,
                         const LossOptions& opts) {
    LossResult result;
    loss_and_grad(head, x, assignment, opts, result);
    return result;
}

void loss_and_grad(const ContrastiveHead& head, const Matrix& x, const ClusterAssignment& assignment,
                   const LossOptions& opts, LossResult& result) {
    if (!(opts.alpha > 0.0)) throw std::invalid_argument("loss_and_grad: alpha must be positive");
    if (assignment.n() != x.rows()) throw std::invalid_argument("loss_and_grad: assignment does not cover all rows");
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto k = static_cast<Eigen::Index>(assignment.k);
    for (std::size_t c = 0; c < assignment.k; ++c) {
        if (assignment.sizes[c] == 0) throw std::invalid_argument("loss_and_grad: empty cluster " + std::to_string(c));
    }

    Workspace& ws = workspace();
    const Activations& act = ws.act;
    run_forward(head, x, ws.act);
    const RowMat& z = act.out;
    const auto m = z.cols();

    // Centers as member means; membership weights 1/|cluster|.
    std::vector<double> inv_size(assignment.k);
    for (std::size_t c = 0; c < assignment.k; ++c) inv_size[c] = 1.0 / static_cast<double>(assignment.sizes[c]);
    RowMat mu = RowMat::Zero(k, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = assignment.labels[static_cast<std::size_t>(i)];
        mu.row(l) += inv_size[static_cast<std::size_t>(l)] * z.row(i);
    }

    RowMat dist(n, k);
    RowMat& z_hat = ws.z_hat;
    RowMat mu_hat;
    Vec z_norm;
    Vec mu_norm;
    if (opts.metric == Metric::Cosine) {
        z_norm = z.rowwise().norm();
        mu_norm = mu.rowwise().norm();
        for (Eigen::Index i = 0; i < n; ++i)
            if (z_norm(i) == 0.0) throw std::invalid_argument("loss_and_grad: zero-norm embedding under cosine metric");
        for (Eigen::Index c = 0; c < k; ++c)
            if (mu_norm(c) == 0.0) throw std::invalid_argument("loss_and_grad: zero-norm center under cosine metric");
        z_hat = z.array().colwise() / z_norm.array();
        mu_hat = mu.array().colwise() / mu_norm.array();
        dist = (1.0 - (z_hat * mu_hat.transpose()).array()).matrix();
    } else {
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < k; ++c) dist(i, c) = (z.row(i) - mu.row(c)).norm();
    }

    // Softmax over -alpha d and the gradient with respect to d.
    result.per_example.resize(static_cast<std::size_t>(n));
    RowMat g_dist(n, k);
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int own = assignment.labels[static_cast<std::size_t>(i)];
        double top = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < k; ++c) top = std::max(top, -opts.alpha * dist(i, c));
        double denom = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) denom += std::exp(-opts.alpha * dist(i, c) - top);
        const double lse = top + std::log(denom);
        const double p_own = std::exp(-opts.alpha * dist(i, own) - lse);
        double term = 0.0;
        for (Eigen::Index c = 0; c < k; ++c) {
            const double p = std::exp(-opts.alpha * dist(i, c) - lse);
            const double hit = c == own ? 1.0 : 0.0;
            // d loss_i / d logit_c
            const double g_logit = opts.form == LossForm::NegLog ? p - hit : p_own * (hit - p);
            g_dist(i, c) = -opts.alpha * g_logit * inv_n;
        }
        term = opts.form == LossForm::NegLog ? lse + opts.alpha * dist(i, own) : p_own;
        result.per_example[static_cast<std::size_t>(i)] = term;
        total += term;
    }
    result.loss = total * inv_n;

    RowMat& g_z = ws.g_z;
    g_z.resize(n, m);
    RowMat g_mu(k, m);
    if (opts.metric == Metric::Cosine) {
        // d = 1 - zhat.muhat; dd/dz = -(muhat - c zhat) / |z|.
        const RowMat cos = (1.0 - dist.array()).matrix();
        const Vec gc_row = (g_dist.array() * cos.array()).rowwise().sum();
        const Vec gc_col = (g_dist.array() * cos.array()).colwise().sum().transpose();
        g_z = -((g_dist * mu_hat) - (z_hat.array().colwise() * gc_row.array()).matrix());
        g_z = g_z.array().colwise() / z_norm.array();
        g_mu = -((g_dist.transpose() * z_hat) - (mu_hat.array().colwise() * gc_col.array()).matrix());
        g_mu = g_mu.array().colwise() / mu_norm.array();
    } else {
        // d = |z - mu|; dd/dz = (z - mu) / d, zero where d == 0.
        RowMat w(n, k);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index c = 0; c < k; ++c) w(i, c) = dist(i, c) > 0.0 ? g_dist(i, c) / dist(i, c) : 0.0;
        const Vec w_row = w.rowwise().sum();
        const Vec w_col = w.colwise().sum().transpose();
        g_z = (z.array().colwise() * w_row.array()).matrix() - w * mu;
        g_mu = (mu.array().colwise() * w_col.array()).matrix() - w.transpose() * z;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const int l = assignment.labels[static_cast<std::size_t>(i)];
        g_z.row(i) += inv_size[static_cast<std::size_t>(l)] * g_mu.row(l);
    }

    // Backpropagate through the head.
    const ConstMap xm = view(x);
    result.grads.resize(head.layers.size());
    // Reuses the caller's buffers when the shapes already match.
    auto set_grads = [](DenseLayer& g, const RowMat& upstream, const auto& input) {
        const auto rows = static_cast<std::size_t>(upstream.cols());
        const auto cols = static_cast<std::size_t>(input.cols());
        if (g.weight.rows() != rows || g.weight.cols() != cols) g.weight = Matrix(rows, cols);
        Eigen::Map<RowMat>(g.weight.data().data(), upstream.cols(), input.cols()).noalias() =
            upstream.transpose() * input;
        // Row-ordered sums; the bias buffer is not aligned.
        g.bias.assign(rows, 0.0);
        for (Eigen::Index i = 0; i < upstream.rows(); ++i)
            for (Eigen::Index j = 0; j < upstream.cols(); ++j) g.bias[static_cast<std::size_t>(j)] += upstream(i, j);
    };
    if (head.layers.size() == 1) {
        set_grads(result.grads[0], g_z, xm);
    } else {
        set_grads(result.grads[1], g_z, act.hidden);
        RowMat& g_hidden = ws.g_hidden;
        g_hidden.resize(n, act.hidden.cols());
        g_hidden.noalias() = g_z * view(head.layers[1].weight);
        g_hidden = (act.pre_hidden.array() > 0.0).select(g_hidden, 0.0);
        set_grads(result.grads[0], g_hidden, xm);
    }
}

AdamState AdamState::for_head(const ContrastiveHead& head, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& layer : head.layers) {
        s.m.push_back(zeros_like(layer));
        s.v.push_back(zeros_like(layer));
    }
    return s;
}

namespace {

void adam_update(std::span<double> param, std::span<double> m, std::span<double> v, std::span<const double> g,
                 const AdamState& s, double c1, double c2) {
    if (param.size() != g.size() || m.size() != g.size() || v.size() != g.size())
        throw std::invalid_argument("adam_step: gradient shape does not match parameters");
    // One pass over the four arrays.
    double* __restrict p_ptr = param.data();
    double* __restrict m_ptr = m.data();
    double* __restrict v_ptr = v.data();
    const double* __restrict g_ptr = g.data();
    const double b1 = s.beta1;
    const double b2 = s.beta2;
    const double inv_c1 = 1.0 / c1;
    const double inv_c2 = 1.0 / c2;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = g_ptr[i];
        const double mi = b1 * m_ptr[i] + (1.0 - b1) * gi;
        const double vi = b2 * v_ptr[i] + (1.0 - b2) * gi * gi;
        m_ptr[i] = mi;
        v_ptr[i] = vi;
        p_ptr[i] -= s.lr * (mi * inv_c1) / (std::sqrt(vi * inv_c2) + s.eps);
    }
}

}  // namespace

void adam_step(ContrastiveHead& head, AdamState& state, const HeadGradients& grads) {
    if (grads.size() != head.layers.size() || state.m.size() != head.layers.size() ||
        state.v.size() != head.layers.size()) {
        throw std::invalid_argument("adam_step: layer count mismatch");
    }
    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (grads[l].weight.rows() != head.layers[l].weight.rows() ||
            grads[l].weight.cols() != head.layers[l].weight.cols()) {
            throw std::invalid_argument("adam_step: gradient shape does not match parameters");
        }
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t l = 0; l < grads.size(); ++l) {
        adam_update(head.layers[l].weight.data(), state.m[l].weight.data(), state.v[l].weight.data(),
                    grads[l].weight.data(), state, c1, c2);
        adam_update(head.layers[l].bias, state.m[l].bias, state.v[l].bias, grads[l].bias, state, c1, c2);
    }
}

LossTrace train_steps(ContrastiveHead& head, AdamState& state, const Matrix& x, const ClusterAssignment& assignment,
                      const LossOptions& opts, std::size_t n_steps) {
    if (n_steps == 0) throw std::invalid_argument("train_steps: n_steps must be >= 1");
    LossTrace trace;
    trace.losses.reserve(n_steps);
    LossResult r;
    for (std::size_t s = 0; s < n_steps; ++s) {
        loss_and_grad(head, x, assignment, opts, r);
        trace.losses.push_back(r.loss);
        adam_step(head, state, r.grads);
    }
    return trace;
}

}  // namespace fec
