#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kdiqa/nets.hpp"

namespace kdiqa {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

/// Moment accumulators, one buffer per parameter tensor.
struct AdamWState {
    AdamWConfig config;
    std::vector<Vec> m;
    std::vector<Vec> v;
    long step = 0;

    static AdamWState for_params(std::span<const ParamTensor> params, AdamWConfig config = {});
};

/// Bias-corrected AdamW with decoupled decay:
///   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
/// Decay applies only to tensors flagged `decay`.
void adamw_step(std::span<const ParamTensor> params, std::span<const std::span<const double>> grads,
                AdamWState& state, double lr);

/// Cosine decay from lr0 at epoch 0 down to floor_fraction * lr0 at total_epochs.
struct LrSchedule {
    double lr0 = 1e-4;
    long total_epochs = 100;
    double floor_fraction = 0.1;
};

double lr_at(const LrSchedule& sched, long epoch);

}  // namespace kdiqa
