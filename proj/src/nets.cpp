#include "kdiqa/nets.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "kdiqa/error.hpp"

namespace kdiqa {

std::size_t EncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

std::vector<std::size_t> EncoderParams::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers.empty()) return sizes;
    sizes.push_back(input_dim());
    for (const auto& l : layers) sizes.push_back(l.weight.rows());
    return sizes;
}

std::vector<ParamTensor> EncoderParams::tensors() {
    std::vector<ParamTensor> out;
    for (auto& l : layers) {
        out.push_back({l.weight.flat(), true});
        out.push_back({l.bias, false});
    }
    return out;
}

std::vector<std::span<const double>> EncoderParams::tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers) {
        out.push_back(l.weight.flat());
        out.push_back(l.bias);
    }
    return out;
}

void EncoderParams::validate() const {
    if (layers.empty()) fail(ErrorKind::config, "encoder has no layers");
    for (std::size_t k = 0; k < layers.size(); ++k) {
        const auto& l = layers[k];
        if (l.weight.rows() != l.bias.size())
            fail(ErrorKind::shape, "layer " + std::to_string(k) + ": bias length " +
                                       std::to_string(l.bias.size()) + " != out " +
                                       std::to_string(l.weight.rows()));
        if (k > 0 && l.weight.cols() != layers[k - 1].weight.rows())
            fail(ErrorKind::shape, "layer " + std::to_string(k) + " input " +
                                       std::to_string(l.weight.cols()) +
                                       " does not chain to previous output " +
                                       std::to_string(layers[k - 1].weight.rows()));
        if (!all_finite(l.weight.flat()) || !all_finite(l.bias))
            fail(ErrorKind::numeric, "layer " + std::to_string(k) + " holds non-finite parameters");
    }
}

GradBundle GradBundle::zeros_like(const EncoderParams& params) {
    GradBundle g;
    g.layers.reserve(params.layers.size());
    for (const auto& l : params.layers)
        g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Vec(l.bias.size(), 0.0)});
    return g;
}

void GradBundle::add(const GradBundle& other) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
        auto dw = layers[k].weight.flat();
        const auto ow = other.layers[k].weight.flat();
        for (std::size_t i = 0; i < dw.size(); ++i) dw[i] += ow[i];
        auto& db = layers[k].bias;
        const auto& ob = other.layers[k].bias;
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += ob[i];
    }
    if (!other.head_weight.empty()) {
        if (head_weight.empty()) head_weight.assign(other.head_weight.size(), 0.0);
        for (std::size_t i = 0; i < head_weight.size(); ++i) head_weight[i] += other.head_weight[i];
        head_bias += other.head_bias;
    }
}

std::vector<std::span<const double>> GradBundle::tensors() const {
    std::vector<std::span<const double>> out;
    for (const auto& l : layers) {
        out.push_back(l.weight.flat());
        out.push_back(l.bias);
    }
    return out;
}

bool GradBundle::all_zero() const {
    for (const auto& t : tensors())
        if (std::any_of(t.begin(), t.end(), [](double v) { return v != 0.0; })) return false;
    return std::all_of(head_weight.begin(), head_weight.end(), [](double v) { return v == 0.0; }) &&
           head_bias == 0.0;
}

EncoderParams init_params(std::span<const std::size_t> sizes, unsigned long long seed,
                          Activation activation) {
    if (sizes.size() < 2) fail(ErrorKind::config, "layer spec needs at least input and output sizes");
    for (std::size_t s : sizes)
        if (s == 0) fail(ErrorKind::config, "layer sizes must be >= 1");
    std::mt19937_64 rng(seed);
    EncoderParams p;
    p.activation = activation;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const std::size_t in = sizes[k];
        const std::size_t out = sizes[k + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        DenseLayer layer{Matrix(out, in), Vec(out, 0.0)};
        for (auto& w : layer.weight.flat()) w = dist(rng);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

namespace {

inline double activate(Activation a, double z) {
    return a == Activation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative expressed through the post-activation value.
inline double activate_grad(Activation a, double h) {
    return a == Activation::tanh ? 1.0 - h * h : (h > 0.0 ? 1.0 : 0.0);
}

}  // namespace

Embedding forward(const EncoderParams& params, std::span<const double> x, ForwardCache& cache) {
    if (params.layers.empty()) fail(ErrorKind::config, "forward: encoder has no layers");
    if (x.size() != params.input_dim())
        fail(ErrorKind::shape, "forward: observation length " + std::to_string(x.size()) +
                                   " != encoder input " + std::to_string(params.input_dim()));
    cache.owner = &params;
    cache.activations.resize(params.layers.size() + 1);
    cache.activations[0].assign(x.begin(), x.end());
    const std::size_t last = params.layers.size() - 1;
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        const auto& l = params.layers[k];
        const Vec& in = cache.activations[k];
        Vec& out = cache.activations[k + 1];
        out.resize(l.weight.rows());
        for (std::size_t r = 0; r < l.weight.rows(); ++r) {
            const double z = dot(l.weight.row(r), in) + l.bias[r];
            out[r] = k == last ? z : activate(params.activation, z);
        }
    }
    return Embedding(cache.activations.back());
}

Embedding forward(const EncoderParams& params, std::span<const double> x) {
    ForwardCache cache;
    return forward(params, x, cache);
}

GradBundle backward(const EncoderParams& params, const ForwardCache& cache,
                    std::span<const double> upstream) {
    if (cache.owner != &params || cache.activations.size() != params.layers.size() + 1)
        fail(ErrorKind::usage, "backward: cache was not produced by forward on these parameters");
    for (std::size_t k = 0; k < params.layers.size(); ++k)
        if (cache.activations[k + 1].size() != params.layers[k].weight.rows())
            fail(ErrorKind::usage, "backward: cache shape does not match layer " + std::to_string(k));
    if (upstream.size() != params.output_dim())
        fail(ErrorKind::shape, "backward: upstream length " + std::to_string(upstream.size()) +
                                   " != embedding dim " + std::to_string(params.output_dim()));

    GradBundle g = GradBundle::zeros_like(params);
    Vec delta(upstream.begin(), upstream.end());  // dL/dz for the current layer
    for (std::size_t k = params.layers.size(); k-- > 0;) {
        const auto& l = params.layers[k];
        const Vec& in = cache.activations[k];
        auto& gl = g.layers[k];
        for (std::size_t r = 0; r < l.weight.rows(); ++r) {
            const double d = delta[r];
            gl.bias[r] = d;
            auto row = gl.weight.row(r);
            for (std::size_t c = 0; c < in.size(); ++c) row[c] = d * in[c];
        }
        if (k == 0) break;
        Vec prev(in.size(), 0.0);
        for (std::size_t r = 0; r < l.weight.rows(); ++r) {
            const double d = delta[r];
            const auto w = l.weight.row(r);
            for (std::size_t c = 0; c < in.size(); ++c) prev[c] += w[c] * d;
        }
        for (std::size_t c = 0; c < in.size(); ++c) prev[c] *= activate_grad(params.activation, in[c]);
        delta = std::move(prev);
    }
    return g;
}

double regression_forward(const RegressionHead& head, std::span<const double> e) {
    if (head.weight.size() != e.size())
        fail(ErrorKind::shape, "regression head dim " + std::to_string(head.weight.size()) +
                                   " != embedding dim " + std::to_string(e.size()));
    return dot(head.weight, e) + head.bias;
}

RegressionHead init_head(std::size_t dim, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    RegressionHead head{Vec(dim), 0.0};
    for (auto& w : head.weight) w = dist(rng);
    return head;
}

namespace {

double batch_loss_value(const EncoderParams& params, std::span<const Vec> xs,
                        const BatchLoss& loss_fn) {
    std::vector<Embedding> embs;
    embs.reserve(xs.size());
    for (const auto& x : xs) embs.push_back(forward(params, x));
    return loss_fn(embs).value;
}

}  // namespace

FdReport finite_diff_check(const EncoderParams& params, std::span<const Vec> xs,
                           const BatchLoss& loss_fn, double tolerance, double h,
                           double abs_floor) {
    std::vector<ForwardCache> caches(xs.size());
    std::vector<Embedding> embs;
    embs.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) embs.push_back(forward(params, xs[i], caches[i]));
    const LossValue loss = loss_fn(embs);
    GradBundle analytic = GradBundle::zeros_like(params);
    for (std::size_t i = 0; i < xs.size(); ++i) analytic.add(backward(params, caches[i], loss.grad.row(i)));

    FdReport report;
    EncoderParams probe = params;
    auto probe_tensors = probe.tensors();
    const auto analytic_tensors = analytic.tensors();
    std::size_t flat_index = 0;
    for (std::size_t t = 0; t < probe_tensors.size(); ++t) {
        auto values = probe_tensors[t].values;
        for (std::size_t i = 0; i < values.size(); ++i, ++flat_index) {
            const double saved = values[i];
            values[i] = saved + h;
            const double up = batch_loss_value(probe, xs, loss_fn);
            values[i] = saved - h;
            const double down = batch_loss_value(probe, xs, loss_fn);
            values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic_tensors[t][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
            const double err = std::abs(a - numeric) / denom;
            if (err > report.max_rel_error || !std::isfinite(err)) {
                report.max_rel_error = std::isfinite(err) ? err : INFINITY;
                report.worst_parameter = flat_index;
            }
        }
    }
    report.parameters_checked = flat_index;
    report.passed = report.max_rel_error < tolerance;
    return report;
}

}  // namespace kdiqa
