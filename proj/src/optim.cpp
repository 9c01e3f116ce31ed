#include "kdiqa/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "kdiqa/error.hpp"

namespace kdiqa {

AdamWState AdamWState::for_params(std::span<const ParamTensor> params, AdamWConfig config) {
    AdamWState s;
    s.config = config;
    for (const auto& p : params) {
        s.m.emplace_back(p.values.size(), 0.0);
        s.v.emplace_back(p.values.size(), 0.0);
    }
    return s;
}

void adamw_step(std::span<const ParamTensor> params, std::span<const std::span<const double>> grads,
                AdamWState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        fail(ErrorKind::shape, "adamw_step: " + std::to_string(params.size()) + " tensors, " +
                                   std::to_string(grads.size()) + " gradients, " +
                                   std::to_string(state.m.size()) + " moment buffers");
    if (!(lr >= 0.0) || !std::isfinite(lr)) fail(ErrorKind::domain, "adamw_step: invalid learning rate");
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].values.size() != grads[t].size() || state.m[t].size() != grads[t].size())
            fail(ErrorKind::shape, "adamw_step: tensor " + std::to_string(t) + " shape mismatch");
        if (!all_finite(grads[t]))
            fail(ErrorKind::numeric, "adamw_step: non-finite gradient in tensor " + std::to_string(t));
    }

    const auto& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t].values;
        const auto g = grads[t];
        auto& m = state.m[t];
        auto& v = state.v[t];
        const double wd = params[t].decay ? c.weight_decay : 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p[i] -= lr * (m_hat / (std::sqrt(v_hat) + c.eps) + wd * p[i]);
        }
    }
}

double lr_at(const LrSchedule& sched, long epoch) {
    if (!(sched.lr0 >= 0.0) || sched.total_epochs < 1 ||
        !(sched.floor_fraction > 0.0 && sched.floor_fraction < 1.0))
        fail(ErrorKind::config, "lr_at: invalid schedule");
    if (epoch < 0 || epoch > sched.total_epochs)
        fail(ErrorKind::domain, "lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                                    std::to_string(sched.total_epochs) + "]");
    const double phase = std::numbers::pi * static_cast<double>(epoch) /
                         static_cast<double>(sched.total_epochs);
    const double f = sched.floor_fraction;
    return sched.lr0 * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(phase)));
}

}  // namespace kdiqa
