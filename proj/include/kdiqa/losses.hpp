#pragma once

// Training objectives and blend-weight schedules for teacher fine-tuning and
// soft/hard distillation. Every loss returns its value together with the
// analytic gradient with respect to the declared differentiation target.

#include <cstddef>
#include <span>

#include "kdiqa/linalg.hpp"
#include "kdiqa/scoring.hpp"

namespace kdiqa {

/// Loss value plus partials. For mse_loss the grad is N x 1 (w.r.t. the
/// predictions); for embedding losses it is N x dim (one row per sample).
struct LossValue {
    double value = 0.0;
    Matrix grad;
};

/// Mean squared error over N predictions; grad w.r.t. pred.
LossValue mse_loss(std::span<const double> pred, std::span<const double> target);

/// 1 - mean cosine(student_i, teacher_i); grad w.r.t. the student rows,
/// teacher treated as constant.
LossValue soft_cosine_loss(std::span<const Embedding> student, std::span<const Embedding> teacher);

/// Predicted score and its gradient w.r.t. the image embedding, chained
/// through expected score, temperature softmax and cosine similarity.
struct ScoreGradient {
    double score = 0.0;
    Vec grad;
};
ScoreGradient score_with_gradient(std::span<const double> img, const PromptBank& bank);

/// MSE between head scores of `student` and `mos`; grad w.r.t. the student rows.
LossValue hard_score_loss(std::span<const Embedding> student, std::span<const double> mos,
                          const PromptBank& bank);

/// value and grad become lambda * soft + (1 - lambda) * hard.
LossValue blended_loss(const LossValue& soft, const LossValue& hard, double lambda);

enum class BlendKind { fixed, cosine };

/// Soft-label weight schedule. `fixed` holds one weight for every step;
/// `cosine` anneals from 1 at t = 0 to 0 at t = total_steps.
struct BlendSchedule {
    BlendKind kind = BlendKind::cosine;
    double lambda_fixed = 0.5;
    long total_steps = 1;

    static BlendSchedule cosine(long total_steps);
    static BlendSchedule fixed(double lambda);
    static BlendSchedule hard_only() { return fixed(0.0); }
    static BlendSchedule soft_only() { return fixed(1.0); }
};

double lambda_at(const BlendSchedule& sched, long t);

}  // namespace kdiqa
