#pragma once

// The three training stages (zero-shot guidance, teacher fine-tuning,
// soft/hard distillation), the regression-head baseline, and the four-variant
// ablation harness.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdiqa/data.hpp"
#include "kdiqa/losses.hpp"
#include "kdiqa/metrics.hpp"
#include "kdiqa/nets.hpp"
#include "kdiqa/optim.hpp"
#include "kdiqa/scoring.hpp"

namespace kdiqa {

inline constexpr double kPaperLrTeacher = 5e-6;
inline constexpr double kPaperLrStudent = 1e-4;

enum class Granularity { epoch, step };

struct TrainConfig {
    long epochs = 100;
    std::size_t batch_size = 64;
    double lr0_teacher = kPaperLrTeacher;
    double lr0_student = kPaperLrStudent;
    double lr_floor = 0.1;
    BlendKind schedule = BlendKind::cosine;
    double lambda_fixed = 0.5;
    Granularity granularity = Granularity::epoch;
    unsigned long long seed = 0;
    int repeat_count = 5;
    double train_fraction = 0.8;
    std::vector<std::size_t> teacher_hidden = {128, 64};
    std::vector<std::size_t> student_hidden = {32};
    Activation activation = Activation::tanh;
    AdamWConfig adamw;

    void validate() const;
    std::vector<std::size_t> teacher_sizes(std::size_t obs_dim, std::size_t dim) const;
    std::vector<std::size_t> student_sizes(std::size_t obs_dim, std::size_t dim) const;
};

struct TeacherKnowledge {
    PromptBank bank;
    std::vector<Embedding> image_features;
};

struct EpochRow {
    long epoch = 0;
    double lambda = 0.0;
    double lr = 0.0;
    double soft_loss = 0.0;  // NaN when not evaluated in this epoch
    double hard_loss = 0.0;  // NaN when not evaluated in this epoch
};

struct RunReport {
    std::string stage;
    unsigned long long seed = 0;
    TrainConfig config;
    std::vector<EpochRow> epochs;
    std::optional<CorrelationReport> test;
    std::size_t soft_loss_evaluations = 0;
    std::size_t hard_loss_evaluations = 0;
};

using Encoder = std::function<Embedding(std::span<const double>)>;

/// Mixes a run seed with a purpose tag into an independent stream seed.
unsigned long long derive_seed(unsigned long long seed, std::uint64_t tag);

enum class SeedStream : std::uint64_t {
    teacher_init = 0x7465616368657231ULL,
    student_init = 0x73747564656e7431ULL,
    head_init = 0x6865616431ULL,
    split = 0x73706c697431ULL,
    bank = 0x62616e6b31ULL,
};

inline unsigned long long seed_for(unsigned long long run_seed, SeedStream stream) {
    return derive_seed(run_seed, static_cast<std::uint64_t>(stream));
}

/// The train/test split every stage of a run with this seed uses.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> run_split_indices(const TrainConfig& cfg,
                                                                                 std::size_t n);
std::pair<Dataset, Dataset> run_split(const TrainConfig& cfg, const Dataset& ds);

/// FNV-1a over the raw bytes of the values.
std::uint64_t fingerprint(std::span<const double> values);
std::uint64_t fingerprint(const PromptBank& bank);
std::uint64_t fingerprint(std::span<const Embedding> embs);
std::uint64_t fingerprint(const EncoderParams& params);

/// Scores every sample through the bank and correlates with MOS. No state changes.
CorrelationReport stage_guidance(const PromptBank& bank, const Encoder& encoder, const Dataset& ds);
CorrelationReport stage_guidance(const PromptBank& bank, const EncoderParams& encoder, const Dataset& ds);

/// Head scores for every sample of `ds`.
std::vector<double> predict_scores(const PromptBank& bank, const EncoderParams& encoder, const Dataset& ds);

/// Trains only the encoder on MSE through the frozen scoring head.
std::pair<EncoderParams, RunReport> finetune_teacher(const TrainConfig& cfg, const PromptBank& bank,
                                                     EncoderParams teacher, const Dataset& train,
                                                     const Dataset* test = nullptr);

/// Runs the teacher once over `train`; rows align with train samples.
TeacherKnowledge extract_knowledge(const PromptBank& bank, const EncoderParams& teacher,
                                   const Dataset& train);

struct LossAudit {
    std::size_t soft_evaluations = 0;
    std::size_t hard_evaluations = 0;
    double soft_value = 0.0;
    double hard_value = 0.0;
};

/// Summed batch gradient of lambda * soft + (1 - lambda) * hard w.r.t. the
/// student. A term whose weight is exactly zero is not evaluated.
GradBundle distill_gradient(const EncoderParams& student, const PromptBank& bank,
                            std::span<const Vec> obs, std::span<const Embedding> teacher_features,
                            std::span<const double> mos, double lambda, LossAudit* audit = nullptr);

/// The blend schedule a distillation run uses for `cfg` and `steps_per_epoch`.
BlendSchedule blend_schedule_for(const TrainConfig& cfg, std::size_t steps_per_epoch);

std::pair<EncoderParams, RunReport> distill_student(const TrainConfig& cfg, const TeacherKnowledge& knowledge,
                                                    EncoderParams student, const Dataset& train,
                                                    const Dataset* test = nullptr);

struct RegressionModel {
    EncoderParams encoder;
    RegressionHead head;
};

std::vector<double> predict_regression(const RegressionModel& model, const Dataset& ds);

/// Ablation variant (1): encoder plus linear head trained jointly with MSE.
std::pair<RegressionModel, RunReport> train_regression_baseline(const TrainConfig& cfg, RegressionModel model,
                                                                const Dataset& train,
                                                                const Dataset* test = nullptr);

inline constexpr std::size_t kNumVariants = 4;
inline constexpr std::array<const char*, kNumVariants> kVariantNames = {
    "regression_head", "hard_label", "soft_label", "cosine_blend"};

struct AblationRun {
    unsigned long long seed = 0;
    RunReport teacher;
    std::array<RunReport, kNumVariants> variants;
};

/// One ablation repetition with a single seed: split, teacher fine-tuning,
/// knowledge extraction and all four student variants from one shared init.
AblationRun run_ablation_once(const TrainConfig& cfg, const PromptBank& bank, const Dataset& ds,
                              unsigned long long seed);

struct MedianReport {
    CorrelationReport median;
    std::vector<CorrelationReport> runs;
};

/// Elementwise median of PLCC and SRCC; requires an odd, nonempty list.
CorrelationReport median_report(std::span<const CorrelationReport> runs);

/// Runs `job` with seeds cfg.seed + 0 ... cfg.seed + repeat_count - 1.
MedianReport median_of_runs(const TrainConfig& cfg,
                            const std::function<CorrelationReport(unsigned long long)>& job);

struct AblationReport {
    TrainConfig config;
    std::vector<AblationRun> runs;
    MedianReport teacher;
    std::array<MedianReport, kNumVariants> variants;
};

AblationReport run_ablation(const TrainConfig& cfg, const PromptBank& bank, const Dataset& ds);

}  // namespace kdiqa
