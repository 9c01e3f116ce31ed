#pragma once

// Small feedforward encoders with hand-written reverse mode. Teacher and
// student are the same type with different layer specs.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "kdiqa/linalg.hpp"
#include "kdiqa/losses.hpp"
#include "kdiqa/scoring.hpp"

namespace kdiqa {

enum class Activation { tanh, relu };

struct DenseLayer {
    Matrix weight;  // out x in
    Vec bias;       // out

    bool operator==(const DenseLayer&) const = default;
};

/// A trainable tensor exposed to the optimizer. Weights decay, biases don't.
struct ParamTensor {
    std::span<double> values;
    bool decay = true;
};

struct EncoderParams {
    std::vector<DenseLayer> layers;
    Activation activation = Activation::tanh;

    std::size_t input_dim() const { return layers.front().weight.cols(); }
    std::size_t output_dim() const { return layers.back().weight.rows(); }
    std::size_t parameter_count() const;
    /// Layer sizes [in, hidden..., out].
    std::vector<std::size_t> layer_sizes() const;

    std::vector<ParamTensor> tensors();
    std::vector<std::span<const double>> tensors() const;

    /// Throws shape/numeric errors when layers do not chain or hold NaN/Inf.
    void validate() const;

    bool operator==(const EncoderParams&) const = default;
};

/// Partials w.r.t. every encoder weight and bias, shape-congruent with the
/// encoder. Regression-head partials are only populated for variant training.
struct GradBundle {
    std::vector<DenseLayer> layers;
    Vec head_weight;
    double head_bias = 0.0;

    static GradBundle zeros_like(const EncoderParams& params);
    void add(const GradBundle& other);
    std::vector<std::span<const double>> tensors() const;
    bool all_zero() const;
};

/// Activations recorded by forward: activations[0] is the input,
/// activations.back() is the linear output.
struct ForwardCache {
    std::vector<Vec> activations;
    const EncoderParams* owner = nullptr;
};

struct RegressionHead {
    Vec weight;
    double bias = 0.0;
};

/// Zero-mean uniform weights in +-1/sqrt(fan_in), zero biases.
EncoderParams init_params(std::span<const std::size_t> sizes, unsigned long long seed,
                          Activation activation = Activation::tanh);

Embedding forward(const EncoderParams& params, std::span<const double> x, ForwardCache& cache);
Embedding forward(const EncoderParams& params, std::span<const double> x);

/// Reverse-mode pass; `upstream` is dLoss/dEmbedding for the cached sample.
GradBundle backward(const EncoderParams& params, const ForwardCache& cache,
                    std::span<const double> upstream);

double regression_forward(const RegressionHead& head, std::span<const double> e);
RegressionHead init_head(std::size_t dim, unsigned long long seed);

/// Scalar batch loss over the embeddings of a batch of observations.
using BatchLoss = std::function<LossValue(std::span<const Embedding>)>;

struct FdReport {
    double max_rel_error = 0.0;
    std::size_t worst_parameter = 0;
    std::size_t parameters_checked = 0;
    bool passed = false;
};

/// Compares backward() against central differences with step h on every
/// parameter. Per-entry error is |a - n| / max(|a|, |n|, abs_floor).
FdReport finite_diff_check(const EncoderParams& params, std::span<const Vec> xs,
                           const BatchLoss& loss_fn, double tolerance, double h = 1e-6,
                           double abs_floor = 1e-6);

}  // namespace kdiqa
