#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "kdiqa/error.hpp"
#include "kdiqa/pipeline.hpp"

using namespace kdiqa;

namespace {

TrainConfig small_config() {
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    cfg.lr0_teacher = 1e-2;
    cfg.lr0_student = 1e-2;
    cfg.seed = 3;
    cfg.repeat_count = 3;
    cfg.teacher_hidden = {16};
    cfg.student_hidden = {6};
    return cfg;
}

struct Fixture {
    TrainConfig cfg = small_config();
    Dataset ds = generate(150, 8, 11);
    PromptBank bank = make_synthetic_bank(8, 0.07, 12);
};

bool same_rows(const RunReport& a, const RunReport& b) {
    if (a.epochs.size() != b.epochs.size()) return false;
    auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    for (std::size_t i = 0; i < a.epochs.size(); ++i) {
        const auto &x = a.epochs[i], &y = b.epochs[i];
        if (x.epoch != y.epoch || !eq(x.lambda, y.lambda) || x.lr != y.lr || !eq(x.soft_loss, y.soft_loss) ||
            !eq(x.hard_loss, y.hard_loss))
            return false;
    }
    return a.test.has_value() == b.test.has_value() &&
           (!a.test || (a.test->plcc == b.test->plcc && a.test->srcc == b.test->srcc));
}

}  // namespace

TEST_CASE("config validation and shapes") {
    TrainConfig cfg;
    cfg.validate();
    CHECK(cfg.epochs == 100);
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.lr0_teacher == 5e-6);
    CHECK(cfg.lr0_student == 1e-4);
    CHECK(cfg.teacher_sizes(32, 32) == std::vector<std::size_t>{32, 128, 64, 32});
    CHECK(cfg.student_sizes(32, 32) == std::vector<std::size_t>{32, 32, 32});
    const auto t = init_params(cfg.teacher_sizes(32, 32), 1), s = init_params(cfg.student_sizes(32, 32), 1);
    CHECK(s.parameter_count() < t.parameter_count());
    auto bad = cfg;
    bad.repeat_count = 4;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("derived seeds are distinct and stable") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(seed_for(5, SeedStream::teacher_init) != seed_for(5, SeedStream::student_init));
}

TEST_CASE("guidance on a constant encoder is undefined") {
    Fixture f;
    const Vec perfect(f.bank.row(4).begin(), f.bank.row(4).end());
    const Encoder constant = [&](std::span<const double>) { return Embedding(perfect); };
    try {
        stage_guidance(f.bank, constant, f.ds);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::undefined);
    }
}

TEST_CASE("guidance with a generator oracle encoder") {
    Fixture f;
    std::map<Vec, double> latent;
    for (const auto& s : f.ds.samples) latent[s.obs] = latent_from_mos(s.mos);
    // Slide along the bank between adjacent level rows according to quality.
    const Encoder oracle_enc = [&](std::span<const double> obs) {
        const double pos = 4.0 * (1.0 - latent.at(Vec(obs.begin(), obs.end())));
        const std::size_t lo = std::min<std::size_t>(static_cast<std::size_t>(pos), 3);
        const double frac = pos - static_cast<double>(lo);
        Vec e(f.bank.dim());
        for (std::size_t j = 0; j < e.size(); ++j)
            e[j] = (1 - frac) * f.bank.row(lo)[j] + frac * f.bank.row(lo + 1)[j];
        return Embedding(e);
    };
    const auto r = stage_guidance(f.bank, oracle_enc, f.ds);
    CHECK(r.plcc >= 0.99);
    CHECK(r.srcc >= 0.99);
}

TEST_CASE("guidance on an untrained teacher produces a report and changes nothing") {
    Fixture f;
    const auto t = init_params(f.cfg.teacher_sizes(8, 8), 1);
    const auto before = fingerprint(t);
    const auto bank_before = fingerprint(f.bank);
    const auto r = stage_guidance(f.bank, t, f.ds);
    CHECK(r.n == f.ds.size());
    CHECK(std::fabs(r.plcc) <= 1.0);
    CHECK(fingerprint(t) == before);
    CHECK(fingerprint(f.bank) == bank_before);
}

TEST_CASE("teacher fine-tuning freezes the bank and lowers training loss") {
    Fixture f;
    auto cfg = f.cfg;
    cfg.epochs = 20;
    const auto [train, test] = run_split(cfg, f.ds);
    const auto t0 = init_params(cfg.teacher_sizes(8, 8), 1);
    const auto bank_before = fingerprint(f.bank);
    const auto [t1, rep] = finetune_teacher(cfg, f.bank, t0, train, &test);
    CHECK(fingerprint(f.bank) == bank_before);
    CHECK_FALSE(t1 == t0);
    REQUIRE(rep.epochs.size() == 20);
    CHECK(rep.epochs.back().hard_loss < rep.epochs.front().hard_loss);
    CHECK(std::isnan(rep.epochs.front().soft_loss));
    CHECK(rep.soft_loss_evaluations == 0);
    CHECK(rep.test.has_value());
    CHECK(rep.epochs.front().lr == cfg.lr0_teacher);
    CHECK(rep.epochs.back().lr == 0.1 * cfg.lr0_teacher);
}

TEST_CASE("zero-step fine-tuning is a fixed point") {
    Fixture f;
    auto cfg = f.cfg;
    cfg.epochs = 1;
    cfg.lr0_teacher = 0.0;
    const auto t0 = init_params(cfg.teacher_sizes(8, 8), 1);
    const auto [t1, rep] = finetune_teacher(cfg, f.bank, t0, f.ds);
    CHECK(t1 == t0);
}

TEST_CASE("fine-tuning rejects shape mismatches") {
    Fixture f;
    const auto wrong = init_params(std::vector<std::size_t>{7, 4, 8}, 1);
    CHECK_THROWS_AS(finetune_teacher(f.cfg, f.bank, wrong, f.ds), Error);
    CHECK_THROWS_AS(extract_knowledge(f.bank, wrong, f.ds), Error);
}

TEST_CASE("knowledge extraction") {
    Fixture f;
    const auto t = init_params(f.cfg.teacher_sizes(8, 8), 4);
    const auto k1 = extract_knowledge(f.bank, t, f.ds);
    const auto k2 = extract_knowledge(f.bank, t, f.ds);
    CHECK(k1.image_features.size() == f.ds.size());
    CHECK(k1.image_features == k2.image_features);
    CHECK(k1.image_features[5] == forward(t, f.ds.samples[5].obs));
}

TEST_CASE("distillation freezes knowledge and follows the blend schedule") {
    Fixture f;
    const auto [train, test] = run_split(f.cfg, f.ds);
    const auto teacher = init_params(f.cfg.teacher_sizes(8, 8), 4);
    const auto k = extract_knowledge(f.bank, teacher, train);
    const auto bank_hash = fingerprint(k.bank);
    const auto feat_hash = fingerprint(k.image_features);
    const auto teacher_hash = fingerprint(teacher);
    const auto s0 = init_params(f.cfg.student_sizes(8, 8), 5);
    const auto [s1, rep] = distill_student(f.cfg, k, s0, train, &test);
    CHECK(fingerprint(k.bank) == bank_hash);
    CHECK(fingerprint(k.image_features) == feat_hash);
    CHECK(fingerprint(teacher) == teacher_hash);
    CHECK_FALSE(s1 == s0);

    const std::size_t spe = (train.size() + f.cfg.batch_size - 1) / f.cfg.batch_size;
    const auto sched = blend_schedule_for(f.cfg, spe);
    REQUIRE(rep.epochs.size() == static_cast<std::size_t>(f.cfg.epochs));
    for (const auto& row : rep.epochs) CHECK(row.lambda == lambda_at(sched, row.epoch));
    CHECK(rep.epochs.front().lambda == 1.0);
    CHECK(rep.epochs.back().lambda == 0.0);
    CHECK(std::isnan(rep.epochs.front().hard_loss));
    CHECK(std::isnan(rep.epochs.back().soft_loss));
}

TEST_CASE("step granularity anneals within epochs") {
    Fixture f;
    auto cfg = f.cfg;
    cfg.granularity = Granularity::step;
    const auto [train, test] = run_split(cfg, f.ds);
    const auto k = extract_knowledge(f.bank, init_params(cfg.teacher_sizes(8, 8), 4), train);
    const auto [s1, rep] = distill_student(cfg, k, init_params(cfg.student_sizes(8, 8), 5), train);
    const std::size_t spe = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const auto sched = blend_schedule_for(cfg, spe);
    CHECK(sched.total_steps == cfg.epochs * static_cast<long>(spe) - 1);
    for (const auto& row : rep.epochs)
        CHECK(row.lambda == lambda_at(sched, row.epoch * static_cast<long>(spe)));
    CHECK(rep.epochs.back().lambda > 0.0);
}

TEST_CASE("schedule endpoint gradients equal single-loss gradients") {
    Fixture f;
    const auto [train, test] = run_split(f.cfg, f.ds);
    const auto k = extract_knowledge(f.bank, init_params(f.cfg.teacher_sizes(8, 8), 4), train);
    const auto s = init_params(f.cfg.student_sizes(8, 8), 5);
    std::vector<Vec> obs;
    Vec mos;
    std::vector<Embedding> feats;
    for (std::size_t i = 0; i < 16; ++i) {
        obs.push_back(train.samples[i].obs);
        mos.push_back(train.samples[i].mos);
        feats.push_back(k.image_features[i]);
    }
    const auto sched = blend_schedule_for(f.cfg, 8);
    LossAudit a0, a1;
    const auto g_start = distill_gradient(s, f.bank, obs, feats, mos, lambda_at(sched, 0), &a0);
    const auto g_soft = distill_gradient(s, f.bank, obs, feats, mos, 1.0);
    const auto g_end = distill_gradient(s, f.bank, obs, feats, mos, lambda_at(sched, sched.total_steps), &a1);
    const auto g_hard = distill_gradient(s, f.bank, obs, feats, mos, 0.0);
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        CHECK(g_start.layers[l] == g_soft.layers[l]);
        CHECK(g_end.layers[l] == g_hard.layers[l]);
    }
    CHECK(a0.hard_evaluations == 0);
    CHECK(a1.soft_evaluations == 0);
    CHECK_THROWS_AS(distill_gradient(s, f.bank, obs, feats, mos, 1.1), Error);
}

TEST_CASE("soft-only distillation never consults mos") {
    Fixture f;
    auto cfg = f.cfg;
    cfg.schedule = BlendKind::fixed;
    cfg.lambda_fixed = 1.0;
    const auto [train, test] = run_split(cfg, f.ds);
    const auto k = extract_knowledge(f.bank, init_params(cfg.teacher_sizes(8, 8), 4), train);
    const auto s0 = init_params(cfg.student_sizes(8, 8), 5);
    const auto [s1, rep] = distill_student(cfg, k, s0, train);
    CHECK(rep.hard_loss_evaluations == 0);
    CHECK(rep.soft_loss_evaluations > 0);

    // Replacing every mos must not change the soft-only run at all.
    Dataset scrambled = train;
    for (auto& smp : scrambled.samples) smp.mos = 6.0 - smp.mos;
    const auto [s2, rep2] = distill_student(cfg, k, s0, scrambled);
    CHECK(s1 == s2);
}

TEST_CASE("distillation rejects misaligned knowledge") {
    Fixture f;
    const auto [train, test] = run_split(f.cfg, f.ds);
    auto k = extract_knowledge(f.bank, init_params(f.cfg.teacher_sizes(8, 8), 4), train);
    k.image_features.pop_back();
    try {
        distill_student(f.cfg, k, init_params(f.cfg.student_sizes(8, 8), 5), train);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::data);
    }
}

TEST_CASE("imported features match a wrapped encoder") {
    // One-hot observations through a single linear layer pick out columns
    // exactly, so an encoder can reproduce an imported feature table bit for bit.
    const std::size_t n = 12, dim = 5;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(-1, 1);
    std::vector<Embedding> imported;
    for (std::size_t i = 0; i < n; ++i) {
        Vec e(dim);
        for (auto& x : e) x = u(rng);
        imported.emplace_back(e);
    }
    Dataset ds;
    ds.obs_dim = n;
    for (std::size_t i = 0; i < n; ++i) {
        Vec obs(n, 0.0);
        obs[i] = 1.0;
        ds.samples.push_back({"x" + std::to_string(i), obs, 1.0 + 4.0 * static_cast<double>(i) / (n - 1)});
    }
    auto enc = init_params(std::vector<std::size_t>{n, dim}, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) enc.layers[0].weight(j, i) = imported[i].values[j];
    const auto bank = make_synthetic_bank(dim, 0.07, 2);
    const auto extracted = extract_knowledge(bank, enc, ds);
    CHECK(extracted.image_features == imported);

    auto cfg = small_config();
    const TeacherKnowledge direct{bank, imported};
    const auto s0 = init_params(std::vector<std::size_t>{n, 4, dim}, 3);
    const auto [a, ra] = distill_student(cfg, extracted, s0, ds);
    const auto [b, rb] = distill_student(cfg, direct, s0, ds);
    CHECK(a == b);
}

TEST_CASE("determinism of training stages") {
    Fixture f;
    const auto [train, test] = run_split(f.cfg, f.ds);
    const auto t0 = init_params(f.cfg.teacher_sizes(8, 8), 1);
    const auto [a, ra] = finetune_teacher(f.cfg, f.bank, t0, train, &test);
    const auto [b, rb] = finetune_teacher(f.cfg, f.bank, t0, train, &test);
    CHECK(a == b);
    CHECK(same_rows(ra, rb));
    const auto k = extract_knowledge(f.bank, a, train);
    const auto s0 = init_params(f.cfg.student_sizes(8, 8), 2);
    const auto [c, rc] = distill_student(f.cfg, k, s0, train, &test);
    const auto [d, rd] = distill_student(f.cfg, k, s0, train, &test);
    CHECK(c == d);
    CHECK(same_rows(rc, rd));
}

TEST_CASE("ablation variants match their direct definitions") {
    Fixture f;
    const auto run = run_ablation_once(f.cfg, f.bank, f.ds, 21);
    auto cfg = f.cfg;
    cfg.seed = 21;
    const auto [train, test] = run_split(cfg, f.ds);
    auto teacher0 = init_params(cfg.teacher_sizes(8, 8), seed_for(21, SeedStream::teacher_init));
    const auto [teacher, trep] = finetune_teacher(cfg, f.bank, teacher0, train, &test);
    CHECK(same_rows(trep, run.teacher));
    const auto k = extract_knowledge(f.bank, teacher, train);
    const auto s0 = init_params(cfg.student_sizes(8, 8), seed_for(21, SeedStream::student_init));

    auto hard = cfg;
    hard.schedule = BlendKind::fixed;
    hard.lambda_fixed = 0.0;
    CHECK(same_rows(distill_student(hard, k, s0, train, &test).second, run.variants[1]));
    auto soft = cfg;
    soft.schedule = BlendKind::fixed;
    soft.lambda_fixed = 1.0;
    CHECK(same_rows(distill_student(soft, k, s0, train, &test).second, run.variants[2]));
    CHECK(same_rows(distill_student(cfg, k, s0, train, &test).second, run.variants[3]));

    CHECK(run.variants[1].soft_loss_evaluations == 0);
    CHECK(run.variants[2].hard_loss_evaluations == 0);
    for (const auto& v : run.variants) {
        CHECK(v.epochs.size() == static_cast<std::size_t>(cfg.epochs));
        CHECK(v.test.has_value());
        CHECK(v.test->n == test.size());
    }
}

TEST_CASE("median of runs") {
    const std::vector<CorrelationReport> three{{0.8, 0.1, 5}, {0.9, 0.3, 5}, {0.7, 0.2, 5}};
    CHECK(median_report(three).plcc == 0.8);
    CHECK(median_report(three).srcc == 0.2);
    std::vector<CorrelationReport> perm{three[2], three[0], three[1]};
    CHECK(median_report(perm).plcc == 0.8);
    CHECK_THROWS_AS(median_report(std::span<const CorrelationReport>(three.data(), 2)), Error);
    CHECK_THROWS_AS(median_report(std::span<const CorrelationReport>()), Error);

    TrainConfig cfg;
    cfg.seed = 10;
    cfg.repeat_count = 3;
    std::vector<unsigned long long> seen;
    const auto m = median_of_runs(cfg, [&](unsigned long long s) {
        seen.push_back(s);
        return CorrelationReport{static_cast<double>(s), 0.0, 3};
    });
    CHECK(seen == std::vector<unsigned long long>{10, 11, 12});
    CHECK(m.median.plcc == 11.0);
    CHECK(m.runs.size() == 3);

    cfg.repeat_count = 1;
    const auto single = median_of_runs(cfg, [](unsigned long long) { return CorrelationReport{0.42, 0.24, 7}; });
    CHECK(single.median.plcc == 0.42);
    CHECK(single.median.srcc == 0.24);
}
