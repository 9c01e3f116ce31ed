#include "kdiqa/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "kdiqa/error.hpp"
#include "kdiqa/kernels.hpp"

namespace kdiqa {

namespace {

constexpr std::uint64_t kTagShuffleTeacher = 0x7368756631ULL;
constexpr std::uint64_t kTagShuffleStudent = 0x7368756632ULL;
constexpr std::uint64_t kTagShuffleRegression = 0x7368756633ULL;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> with_ends(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return sizes;
}

std::vector<Vec> gather_obs(const Dataset& ds, std::span<const std::size_t> idx) {
    std::vector<Vec> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(ds.samples[i].obs);
    return out;
}

std::vector<Vec> all_obs(const Dataset& ds) {
    std::vector<Vec> out;
    out.reserve(ds.size());
    for (const auto& s : ds.samples) out.push_back(s.obs);
    return out;
}

long schedule_span(long steps) { return std::max(steps - 1, 1L); }

struct BatchResult {
    GradBundle grad;
    LossAudit audit;
};

// Shared epoch/batch loop: per-epoch seeded shuffle, last partial batch kept,
// per-epoch cosine learning rate, optional blend schedule.
template <class BatchFn>
void run_epochs(const TrainConfig& cfg, double lr0, std::size_t n, std::uint64_t shuffle_tag,
                const std::vector<ParamTensor>& tensors, const BlendSchedule* sched,
                BatchFn&& batch_fn, RunReport& report) {
    const std::size_t bs = cfg.batch_size;
    const std::size_t steps_per_epoch = (n + bs - 1) / bs;
    const LrSchedule lr_sched{lr0, schedule_span(cfg.epochs), cfg.lr_floor};
    AdamWState state = AdamWState::for_params(tensors, cfg.adamw);
    std::vector<std::size_t> order(n);
    const unsigned long long stream = derive_seed(report.seed, shuffle_tag);

    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(lr_sched, epoch);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(stream, static_cast<std::uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);

        EpochRow row{epoch, kNaN, lr, 0.0, 0.0};
        double soft_sum = 0.0, hard_sum = 0.0;
        std::size_t soft_batches = 0, hard_batches = 0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::size_t begin = b * bs;
            const std::size_t end = std::min(n, begin + bs);
            const std::span<const std::size_t> idx(order.data() + begin, end - begin);
            double lambda = 0.0;
            if (sched) {
                const long t = cfg.granularity == Granularity::epoch
                                   ? epoch
                                   : epoch * static_cast<long>(steps_per_epoch) + static_cast<long>(b);
                lambda = lambda_at(*sched, t);
            }
            if (b == 0) row.lambda = lambda;

            auto where = [&] {
                return report.stage + ": epoch " + std::to_string(epoch) + ", batch " + std::to_string(b);
            };
            BatchResult r;
            try {
                r = batch_fn(idx, lambda);
            } catch (const Error& e) {
                fail(e.kind(), where() + ": " + e.what());
            }
            const bool bad_soft = r.audit.soft_evaluations && !std::isfinite(r.audit.soft_value);
            const bool bad_hard = r.audit.hard_evaluations && !std::isfinite(r.audit.hard_value);
            if (bad_soft || bad_hard)
                fail(ErrorKind::numeric, where() + ": non-finite loss");
            if (r.audit.soft_evaluations) {
                soft_sum += r.audit.soft_value;
                ++soft_batches;
                report.soft_loss_evaluations += r.audit.soft_evaluations;
            }
            if (r.audit.hard_evaluations) {
                hard_sum += r.audit.hard_value;
                ++hard_batches;
                report.hard_loss_evaluations += r.audit.hard_evaluations;
            }

            auto grads = r.grad.tensors();
            if (!r.grad.head_weight.empty()) {
                grads.push_back(r.grad.head_weight);
                grads.push_back(std::span<const double>(&r.grad.head_bias, 1));
            }
            try {
                adamw_step(tensors, grads, state, lr);
            } catch (const Error& e) {
                fail(e.kind(), where() + ": " + e.what());
            }
        }
        row.soft_loss = soft_batches ? soft_sum / static_cast<double>(soft_batches) : kNaN;
        row.hard_loss = hard_batches ? hard_sum / static_cast<double>(hard_batches) : kNaN;
        report.epochs.push_back(row);
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) fail(ErrorKind::config, "epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::config, "batch_size must be >= 1");
    if (!(lr0_teacher >= 0.0) || !(lr0_student >= 0.0))
        fail(ErrorKind::config, "learning rates must be >= 0");
    if (!(lr_floor > 0.0 && lr_floor < 1.0)) fail(ErrorKind::config, "lr_floor must lie in (0,1)");
    if (!(lambda_fixed >= 0.0 && lambda_fixed <= 1.0))
        fail(ErrorKind::config, "lambda_fixed must lie in [0,1]");
    if (repeat_count < 1 || repeat_count % 2 == 0)
        fail(ErrorKind::config, "repeat_count must be odd and >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        fail(ErrorKind::config, "train_fraction must lie in (0,1)");
    for (std::size_t h : teacher_hidden)
        if (h == 0) fail(ErrorKind::config, "teacher hidden sizes must be >= 1");
    for (std::size_t h : student_hidden)
        if (h == 0) fail(ErrorKind::config, "student hidden sizes must be >= 1");
    if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0) || !(adamw.beta2 >= 0.0 && adamw.beta2 < 1.0) ||
        !(adamw.eps > 0.0) || !(adamw.weight_decay >= 0.0))
        fail(ErrorKind::config, "invalid AdamW hyperparameters");
}

std::vector<std::size_t> TrainConfig::teacher_sizes(std::size_t obs_dim, std::size_t dim) const {
    return with_ends(obs_dim, teacher_hidden, dim);
}

std::vector<std::size_t> TrainConfig::student_sizes(std::size_t obs_dim, std::size_t dim) const {
    return with_ends(obs_dim, student_hidden, dim);
}

unsigned long long derive_seed(unsigned long long seed, std::uint64_t tag) {
    // splitmix64 finalizer over the combined words
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> run_split_indices(const TrainConfig& cfg,
                                                                                 std::size_t n) {
    return split_indices(n, cfg.train_fraction, seed_for(cfg.seed, SeedStream::split));
}

std::pair<Dataset, Dataset> run_split(const TrainConfig& cfg, const Dataset& ds) {
    return split(ds, cfg.train_fraction, seed_for(cfg.seed, SeedStream::split));
}

std::uint64_t fingerprint(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        unsigned char bytes[sizeof(double)];
        std::memcpy(bytes, &v, sizeof v);
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

std::uint64_t fingerprint(const PromptBank& bank) {
    Vec all(bank.text_features().flat().begin(), bank.text_features().flat().end());
    all.push_back(bank.temperature());
    return fingerprint(all);
}

std::uint64_t fingerprint(std::span<const Embedding> embs) {
    std::uint64_t h = 0;
    for (const auto& e : embs) h = h * 31 + fingerprint(e.view());
    return h;
}

std::uint64_t fingerprint(const EncoderParams& params) {
    std::uint64_t h = 0;
    for (const auto t : params.tensors()) h = h * 31 + fingerprint(t);
    return h;
}

CorrelationReport stage_guidance(const PromptBank& bank, const Encoder& encoder, const Dataset& ds) {
    std::vector<Embedding> embs;
    embs.reserve(ds.size());
    for (const auto& s : ds.samples) embs.push_back(encoder(s.obs));
    const auto scores = kernels::omp::score_batch(embs, bank);
    const auto mos = ds.mos();
    return correlate(scores, mos);
}

std::vector<double> predict_scores(const PromptBank& bank, const EncoderParams& encoder, const Dataset& ds) {
    const auto obs = all_obs(ds);
    const auto embs = kernels::omp::encode_batch(encoder, obs);
    return kernels::omp::score_batch(embs, bank);
}

CorrelationReport stage_guidance(const PromptBank& bank, const EncoderParams& encoder, const Dataset& ds) {
    const auto scores = predict_scores(bank, encoder, ds);
    const auto mos = ds.mos();
    return correlate(scores, mos);
}

std::pair<EncoderParams, RunReport> finetune_teacher(const TrainConfig& cfg, const PromptBank& bank,
                                                     EncoderParams teacher, const Dataset& train,
                                                     const Dataset* test) {
    cfg.validate();
    teacher.validate();
    if (teacher.input_dim() != train.obs_dim || teacher.output_dim() != bank.dim())
        fail(ErrorKind::shape, "finetune_teacher: encoder maps " + std::to_string(teacher.input_dim()) +
                                   " -> " + std::to_string(teacher.output_dim()) + " but data has obs_dim " +
                                   std::to_string(train.obs_dim) + " and bank dim " + std::to_string(bank.dim()));
    RunReport report;
    report.stage = "finetune-teacher";
    report.seed = cfg.seed;
    report.config = cfg;

    const auto tensors = teacher.tensors();
    run_epochs(cfg, cfg.lr0_teacher, train.size(), kTagShuffleTeacher, tensors, nullptr,
               [&](std::span<const std::size_t> idx, double) {
                   const auto obs = gather_obs(train, idx);
                   Vec mos;
                   for (std::size_t i : idx) mos.push_back(train.samples[i].mos);
                   std::vector<ForwardCache> caches;
                   const auto embs = kernels::omp::encode_batch(teacher, obs, &caches);
                   const LossValue loss = hard_score_loss(embs, mos, bank);
                   BatchResult r{kernels::omp::backward_batch(teacher, caches, loss.grad), {}};
                   r.audit.hard_evaluations = 1;
                   r.audit.hard_value = loss.value;
                   return r;
               },
               report);
    if (test) report.test = stage_guidance(bank, teacher, *test);
    return {std::move(teacher), std::move(report)};
}

TeacherKnowledge extract_knowledge(const PromptBank& bank, const EncoderParams& teacher, const Dataset& train) {
    teacher.validate();
    if (teacher.input_dim() != train.obs_dim)
        fail(ErrorKind::shape, "extract_knowledge: teacher input " + std::to_string(teacher.input_dim()) +
                                   " != obs_dim " + std::to_string(train.obs_dim));
    if (teacher.output_dim() != bank.dim())
        fail(ErrorKind::shape, "extract_knowledge: teacher output " + std::to_string(teacher.output_dim()) +
                                   " != bank dim " + std::to_string(bank.dim()));
    const auto obs = all_obs(train);
    return {bank, kernels::omp::encode_batch(teacher, obs)};
}

GradBundle distill_gradient(const EncoderParams& student, const PromptBank& bank, std::span<const Vec> obs,
                            std::span<const Embedding> teacher_features, std::span<const double> mos,
                            double lambda, LossAudit* audit) {
    if (!(lambda >= 0.0 && lambda <= 1.0))
        fail(ErrorKind::domain, "distill_gradient: lambda outside [0,1]");
    std::vector<ForwardCache> caches;
    const auto embs = kernels::omp::encode_batch(student, obs, &caches);
    std::optional<LossValue> soft, hard;
    if (lambda > 0.0) soft = soft_cosine_loss(embs, teacher_features);
    if (lambda < 1.0) hard = hard_score_loss(embs, mos, bank);
    if (audit) {
        *audit = {};
        if (soft) {
            audit->soft_evaluations = 1;
            audit->soft_value = soft->value;
        }
        if (hard) {
            audit->hard_evaluations = 1;
            audit->hard_value = hard->value;
        }
    }
    const LossValue total = soft && hard ? blended_loss(*soft, *hard, lambda) : (soft ? *soft : *hard);
    return kernels::omp::backward_batch(student, caches, total.grad);
}

BlendSchedule blend_schedule_for(const TrainConfig& cfg, std::size_t steps_per_epoch) {
    if (cfg.schedule == BlendKind::fixed) return BlendSchedule::fixed(cfg.lambda_fixed);
    const long steps = cfg.granularity == Granularity::epoch
                           ? cfg.epochs
                           : cfg.epochs * static_cast<long>(steps_per_epoch);
    return BlendSchedule::cosine(schedule_span(steps));
}

std::pair<EncoderParams, RunReport> distill_student(const TrainConfig& cfg, const TeacherKnowledge& knowledge,
                                                    EncoderParams student, const Dataset& train,
                                                    const Dataset* test) {
    cfg.validate();
    student.validate();
    if (knowledge.image_features.size() != train.size())
        fail(ErrorKind::data, "distill_student: " + std::to_string(knowledge.image_features.size()) +
                                  " teacher features for " + std::to_string(train.size()) + " training samples");
    if (student.input_dim() != train.obs_dim || student.output_dim() != knowledge.bank.dim())
        fail(ErrorKind::shape, "distill_student: student shape does not match data/bank");
    for (std::size_t i = 0; i < knowledge.image_features.size(); ++i)
        if (knowledge.image_features[i].dim() != knowledge.bank.dim())
            fail(ErrorKind::data, "distill_student: teacher feature " + std::to_string(i) + " has dim " +
                                      std::to_string(knowledge.image_features[i].dim()));

    RunReport report;
    report.stage = "distill";
    report.seed = cfg.seed;
    report.config = cfg;

    const std::size_t steps_per_epoch = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const BlendSchedule sched = blend_schedule_for(cfg, steps_per_epoch);
    const auto tensors = student.tensors();
    run_epochs(cfg, cfg.lr0_student, train.size(), kTagShuffleStudent, tensors, &sched,
               [&](std::span<const std::size_t> idx, double lambda) {
                   const auto obs = gather_obs(train, idx);
                   std::vector<Embedding> feats;
                   Vec mos;
                   feats.reserve(idx.size());
                   for (std::size_t i : idx) {
                       feats.push_back(knowledge.image_features[i]);
                       if (lambda < 1.0) mos.push_back(train.samples[i].mos);
                   }
                   BatchResult r;
                   r.grad = distill_gradient(student, knowledge.bank, obs, feats, mos, lambda, &r.audit);
                   return r;
               },
               report);
    if (test) report.test = stage_guidance(knowledge.bank, student, *test);
    return {std::move(student), std::move(report)};
}

std::vector<double> predict_regression(const RegressionModel& model, const Dataset& ds) {
    const auto obs = all_obs(ds);
    const auto embs = kernels::omp::encode_batch(model.encoder, obs);
    std::vector<double> out;
    out.reserve(embs.size());
    for (const auto& e : embs) out.push_back(regression_forward(model.head, e.view()));
    return out;
}

std::pair<RegressionModel, RunReport> train_regression_baseline(const TrainConfig& cfg, RegressionModel model,
                                                                const Dataset& train, const Dataset* test) {
    cfg.validate();
    model.encoder.validate();
    if (model.encoder.input_dim() != train.obs_dim || model.head.weight.size() != model.encoder.output_dim())
        fail(ErrorKind::shape, "train_regression_baseline: model shape does not match data");
    RunReport report;
    report.stage = "regression-head";
    report.seed = cfg.seed;
    report.config = cfg;

    auto tensors = model.encoder.tensors();
    tensors.push_back({model.head.weight, true});
    tensors.push_back({std::span<double>(&model.head.bias, 1), false});
    run_epochs(cfg, cfg.lr0_student, train.size(), kTagShuffleRegression, tensors, nullptr,
               [&](std::span<const std::size_t> idx, double) {
                   const auto obs = gather_obs(train, idx);
                   std::vector<ForwardCache> caches;
                   const auto embs = kernels::omp::encode_batch(model.encoder, obs, &caches);
                   Vec pred, mos;
                   for (std::size_t k = 0; k < idx.size(); ++k) {
                       pred.push_back(regression_forward(model.head, embs[k].view()));
                       mos.push_back(train.samples[idx[k]].mos);
                   }
                   const LossValue loss = mse_loss(pred, mos);
                   Matrix upstream(idx.size(), model.head.weight.size());
                   BatchResult r;
                   r.grad.head_weight.assign(model.head.weight.size(), 0.0);
                   for (std::size_t k = 0; k < idx.size(); ++k) {
                       const double g = loss.grad(k, 0);
                       const auto e = embs[k].view();
                       auto up = upstream.row(k);
                       for (std::size_t j = 0; j < e.size(); ++j) {
                           r.grad.head_weight[j] += g * e[j];
                           up[j] = g * model.head.weight[j];
                       }
                       r.grad.head_bias += g;
                   }
                   GradBundle enc = kernels::omp::backward_batch(model.encoder, caches, upstream);
                   r.grad.layers = std::move(enc.layers);
                   r.audit.hard_evaluations = 1;
                   r.audit.hard_value = loss.value;
                   return r;
               },
               report);
    if (test) {
        const auto pred = predict_regression(model, *test);
        const auto mos = test->mos();
        report.test = correlate(pred, mos);
    }
    return {std::move(model), std::move(report)};
}

AblationRun run_ablation_once(const TrainConfig& base, const PromptBank& bank, const Dataset& ds,
                              unsigned long long seed) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.validate();
    const auto [train, test] = run_split(cfg, ds);

    AblationRun run;
    run.seed = seed;
    const auto teacher_sizes = cfg.teacher_sizes(ds.obs_dim, bank.dim());
    EncoderParams teacher0 = init_params(teacher_sizes, seed_for(seed, SeedStream::teacher_init), cfg.activation);
    auto [teacher, teacher_report] = finetune_teacher(cfg, bank, std::move(teacher0), train, &test);
    run.teacher = std::move(teacher_report);
    const TeacherKnowledge knowledge = extract_knowledge(bank, teacher, train);

    const auto student_sizes = cfg.student_sizes(ds.obs_dim, bank.dim());
    const EncoderParams student0 = init_params(student_sizes, seed_for(seed, SeedStream::student_init), cfg.activation);

    RegressionModel baseline{student0, init_head(bank.dim(), seed_for(seed, SeedStream::head_init))};
    run.variants[0] = train_regression_baseline(cfg, std::move(baseline), train, &test).second;

    TrainConfig hard_cfg = cfg;
    hard_cfg.schedule = BlendKind::fixed;
    hard_cfg.lambda_fixed = 0.0;
    run.variants[1] = distill_student(hard_cfg, knowledge, student0, train, &test).second;

    TrainConfig soft_cfg = cfg;
    soft_cfg.schedule = BlendKind::fixed;
    soft_cfg.lambda_fixed = 1.0;
    run.variants[2] = distill_student(soft_cfg, knowledge, student0, train, &test).second;

    TrainConfig blend_cfg = cfg;
    blend_cfg.schedule = BlendKind::cosine;
    run.variants[3] = distill_student(blend_cfg, knowledge, student0, train, &test).second;

    run.variants[0].stage = "variant-1-regression-head";
    run.variants[1].stage = "variant-2-hard-label";
    run.variants[2].stage = "variant-3-soft-label";
    run.variants[3].stage = "variant-4-cosine-blend";
    return run;
}

CorrelationReport median_report(std::span<const CorrelationReport> runs) {
    if (runs.empty() || runs.size() % 2 == 0)
        fail(ErrorKind::config, "median_report: need an odd number of runs, got " + std::to_string(runs.size()));
    Vec p, s;
    for (const auto& r : runs) {
        p.push_back(r.plcc);
        s.push_back(r.srcc);
    }
    const std::size_t mid = runs.size() / 2;
    std::nth_element(p.begin(), p.begin() + mid, p.end());
    std::nth_element(s.begin(), s.begin() + mid, s.end());
    return {p[mid], s[mid], runs.front().n};
}

MedianReport median_of_runs(const TrainConfig& cfg,
                            const std::function<CorrelationReport(unsigned long long)>& job) {
    cfg.validate();
    MedianReport out;
    for (int k = 0; k < cfg.repeat_count; ++k) out.runs.push_back(job(cfg.seed + static_cast<unsigned long long>(k)));
    out.median = median_report(out.runs);
    return out;
}

AblationReport run_ablation(const TrainConfig& cfg, const PromptBank& bank, const Dataset& ds) {
    cfg.validate();
    ds.validate();
    AblationReport report;
    report.config = cfg;
    for (int k = 0; k < cfg.repeat_count; ++k)
        report.runs.push_back(run_ablation_once(cfg, bank, ds, cfg.seed + static_cast<unsigned long long>(k)));

    auto collect = [&](auto pick) {
        MedianReport m;
        for (const auto& run : report.runs) m.runs.push_back(*pick(run).test);
        m.median = median_report(m.runs);
        return m;
    };
    report.teacher = collect([](const AblationRun& r) -> const RunReport& { return r.teacher; });
    for (std::size_t v = 0; v < kNumVariants; ++v)
        report.variants[v] = collect([v](const AblationRun& r) -> const RunReport& { return r.variants[v]; });
    return report;
}

}  // namespace kdiqa
