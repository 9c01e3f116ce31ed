#include "kdiqa/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "kdiqa/error.hpp"

namespace kdiqa {

LossValue mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size())
        fail(ErrorKind::shape, "mse_loss: " + std::to_string(pred.size()) + " predictions vs " +
                                   std::to_string(target.size()) + " targets");
    if (pred.empty()) fail(ErrorKind::shape, "mse_loss: empty batch");
    const double n = static_cast<double>(pred.size());
    LossValue out{0.0, Matrix(pred.size(), 1)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double diff = pred[i] - target[i];
        out.value += diff * diff;
        out.grad(i, 0) = 2.0 * diff / n;
    }
    out.value /= n;
    return out;
}

LossValue soft_cosine_loss(std::span<const Embedding> student, std::span<const Embedding> teacher) {
    if (student.size() != teacher.size())
        fail(ErrorKind::shape, "soft_cosine_loss: " + std::to_string(student.size()) +
                                   " student rows vs " + std::to_string(teacher.size()) +
                                   " teacher rows");
    if (student.empty()) fail(ErrorKind::shape, "soft_cosine_loss: empty batch");
    const std::size_t n = student.size();
    const std::size_t dim = student[0].dim();
    const double inv_n = 1.0 / static_cast<double>(n);
    LossValue out{0.0, Matrix(n, dim)};
    double cos_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto u = student[i].view();
        const auto v = teacher[i].view();
        if (u.size() != dim || v.size() != dim)
            fail(ErrorKind::shape, "soft_cosine_loss: dim mismatch at sample " + std::to_string(i));
        const double nu = norm(u);
        const double nv = norm(v);
        if (nu == 0.0)
            fail(ErrorKind::domain, "soft_cosine_loss: zero-norm student embedding at sample " +
                                        std::to_string(i));
        if (nv == 0.0)
            fail(ErrorKind::domain, "soft_cosine_loss: zero-norm teacher embedding at sample " +
                                        std::to_string(i));
        const double uv = dot(u, v);
        cos_sum += uv / (nu * nv);
        // d cos / du = v / (|u||v|) - (u.v) u / (|u|^3 |v|)
        const double a = 1.0 / (nu * nv);
        const double b = uv / (nu * nu * nu * nv);
        auto g = out.grad.row(i);
        for (std::size_t j = 0; j < dim; ++j) g[j] = -inv_n * (a * v[j] - b * u[j]);
    }
    out.value = 1.0 - cos_sum * inv_n;
    return out;
}

ScoreGradient score_with_gradient(std::span<const double> img, const PromptBank& bank) {
    const Similarities sims = level_similarities(img, bank);
    const QualityDistribution p = softmax_levels(sims, bank.temperature());
    const double s_hat = expected_score(p, bank);
    const double tau = bank.temperature();
    const double nu = norm(img);
    const auto& w = bank.weights();

    ScoreGradient out{s_hat, Vec(img.size(), 0.0)};
    // ds_hat/dsim_j = p_j (w_j - s_hat) / tau
    // dsim_j/du     = t_j / (|u||t_j|) - sim_j u / |u|^2
    double u_coeff = 0.0;
    for (std::size_t j = 0; j < kNumLevels; ++j) {
        const double d_sim = p.probs[j] * (w[j] - s_hat) / tau;
        const double t_coeff = d_sim / (nu * bank.row_norm(j));
        const auto t = bank.row(j);
        for (std::size_t k = 0; k < img.size(); ++k) out.grad[k] += t_coeff * t[k];
        u_coeff += d_sim * sims[j];
    }
    u_coeff /= nu * nu;
    for (std::size_t k = 0; k < img.size(); ++k) out.grad[k] -= u_coeff * img[k];
    return out;
}

LossValue hard_score_loss(std::span<const Embedding> student, std::span<const double> mos,
                          const PromptBank& bank) {
    if (student.size() != mos.size())
        fail(ErrorKind::shape, "hard_score_loss: " + std::to_string(student.size()) +
                                   " embeddings vs " + std::to_string(mos.size()) + " scores");
    if (student.empty()) fail(ErrorKind::shape, "hard_score_loss: empty batch");
    const std::size_t n = student.size();
    std::vector<ScoreGradient> heads;
    heads.reserve(n);
    Vec pred(n);
    for (std::size_t i = 0; i < n; ++i) {
        heads.push_back(score_with_gradient(student[i].view(), bank));
        pred[i] = heads.back().score;
    }
    const LossValue mse = mse_loss(pred, mos);
    LossValue out{mse.value, Matrix(n, bank.dim())};
    for (std::size_t i = 0; i < n; ++i) {
        auto g = out.grad.row(i);
        const double up = mse.grad(i, 0);
        for (std::size_t k = 0; k < g.size(); ++k) g[k] = up * heads[i].grad[k];
    }
    return out;
}

LossValue blended_loss(const LossValue& soft, const LossValue& hard, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        fail(ErrorKind::domain, "blended_loss: lambda " + std::to_string(lambda) + " outside [0,1]");
    if (soft.grad.rows() != hard.grad.rows() || soft.grad.cols() != hard.grad.cols())
        fail(ErrorKind::shape, "blended_loss: soft and hard gradients differ in shape");
    const double mu = 1.0 - lambda;
    LossValue out{lambda * soft.value + mu * hard.value, Matrix(soft.grad.rows(), soft.grad.cols())};
    auto dst = out.grad.flat();
    const auto gs = soft.grad.flat();
    const auto gh = hard.grad.flat();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = lambda * gs[i] + mu * gh[i];
    return out;
}

BlendSchedule BlendSchedule::cosine(long total_steps) {
    if (total_steps < 1) fail(ErrorKind::config, "cosine blend schedule needs T >= 1");
    return {BlendKind::cosine, 0.5, total_steps};
}

BlendSchedule BlendSchedule::fixed(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        fail(ErrorKind::config, "fixed blend weight " + std::to_string(lambda) + " outside [0,1]");
    return {BlendKind::fixed, lambda, 1};
}

double lambda_at(const BlendSchedule& sched, long t) {
    if (sched.kind == BlendKind::fixed) return sched.lambda_fixed;
    if (t < 0 || t > sched.total_steps)
        fail(ErrorKind::domain, "lambda_at: step " + std::to_string(t) + " outside [0, " +
                                    std::to_string(sched.total_steps) + "]");
    const double phase = std::numbers::pi * static_cast<double>(t) /
                         static_cast<double>(sched.total_steps);
    return 0.5 * (1.0 + std::cos(phase));
}

}  // namespace kdiqa
