#include "kdiqa/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "kdiqa/config.hpp"
#include "kdiqa/error.hpp"
#include "kdiqa/io.hpp"
#include "kdiqa/pipeline.hpp"
#include "kdiqa/report.hpp"

namespace kdiqa {

namespace fs = std::filesystem;

namespace {

struct Options {
    // shared
    std::string config;
    std::string data;
    std::string out;
    std::optional<double> tau;
    // datagen
    std::size_t n = 0;
    std::size_t obs_dim = 0;
    unsigned long long seed = 0;
    std::size_t dim = 32;
    double bank_shared = 0.0;
    GeneratorOptions gen;
    // score
    std::string bank;
    std::string embeddings;
    std::string sidecar;
    // finetune / distill / evaluate
    std::string model;
    std::string teacher;
    std::string teacher_features;
};

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

RunConfigFile resolve_config(const Options& o) {
    if (!o.config.empty()) return load_config(o.config);
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load_config(env);
    return {};
}

fs::path resolve_data(const Options& o, const RunConfigFile& cfg) {
    if (!o.data.empty()) return o.data;
    if (cfg.data) return *cfg.data;
    fail(ErrorKind::usage, "no dataset given (use --data or the config key \"data\")");
}

std::optional<double> resolve_tau(const Options& o, const RunConfigFile& cfg) {
    return o.tau ? o.tau : cfg.temperature;
}

std::string correlation_or_undefined(const std::function<CorrelationReport()>& f, KeyValues& kv,
                                     const std::string& prefix) {
    try {
        const auto r = f();
        kv.emplace_back(prefix + ".plcc", format_real(r.plcc));
        kv.emplace_back(prefix + ".srcc", format_real(r.srcc));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined) throw;
        kv.emplace_back(prefix + ".plcc", "undefined");
        kv.emplace_back(prefix + ".srcc", "undefined");
    }
    return {};
}

int run_datagen(const Options& o, std::ostream& out) {
    Dataset ds = generate(o.n, o.obs_dim, o.seed, o.gen);
    const PromptBank bank = make_synthetic_bank(o.dim, o.tau.value_or(kDefaultTemperature), seed_for(o.seed, SeedStream::bank),
                                                o.bank_shared);
    io::write_dataset(o.out, ds, bank);
    out << "wrote " << ds.size() << " samples (obs_dim " << ds.obs_dim << ", bank dim " << bank.dim() << ") to "
        << o.out << '\n';
    return kExitOk;
}

int run_score(const Options& o, std::ostream& out) {
    const RunConfigFile cfg = resolve_config(o);
    std::vector<Embedding> embs;
    std::vector<io::SidecarRecord> recs;
    fs::path bank_path = o.bank;
    if (!o.embeddings.empty()) {
        if (o.sidecar.empty()) fail(ErrorKind::usage, "--embeddings requires --sidecar");
        embs = io::read_embeddings(o.embeddings);
        recs = io::read_sidecar(o.sidecar);
        if (embs.size() != recs.size())
            fail(ErrorKind::data, o.embeddings + " has " + std::to_string(embs.size()) + " rows but " + o.sidecar +
                                      " has " + std::to_string(recs.size()) + " records");
        if (bank_path.empty()) fail(ErrorKind::usage, "--embeddings requires --bank");
    } else {
        const fs::path dir = resolve_data(o, cfg);
        if (o.model.empty()) fail(ErrorKind::usage, "score needs --embeddings/--sidecar or --data with --model");
        const Dataset ds = io::read_dataset(dir);
        const io::Checkpoint ckpt = io::read_checkpoint(o.model);
        std::vector<Vec> obs;
        for (const auto& s : ds.samples) {
            obs.push_back(s.obs);
            recs.push_back({s.id, s.mos, std::nullopt});
        }
        if (ckpt.encoder.input_dim() != ds.obs_dim)
            fail(ErrorKind::data, o.model + " expects " + std::to_string(ckpt.encoder.input_dim()) +
                                      " features, dataset has " + std::to_string(ds.obs_dim));
        for (const auto& x : obs) embs.push_back(forward(ckpt.encoder, x));
        if (bank_path.empty()) bank_path = dir / "bank.iqeb";
    }
    const PromptBank bank = io::read_bank(bank_path, resolve_tau(o, cfg));
    if (embs.empty()) fail(ErrorKind::data, "nothing to score");
    const auto scores = score_batch(embs, bank);

    RunReport rep;
    rep.stage = "score";
    rep.seed = cfg.train.seed;
    rep.config = cfg.train;
    KeyValues kv{{"bank.path", bank_path.string()},
                 {"bank.temperature", format_real(bank.temperature())},
                 {"bank.fingerprint", hex(fingerprint(bank))},
                 {"samples", std::to_string(scores.size())}};
    std::vector<double> mos;
    for (const auto& r : recs) mos.push_back(r.mos);
    if (scores.size() >= 3) correlation_or_undefined([&] { return correlate(scores, mos); }, kv, "all");

    std::string text = format_run_report(rep, kv);
    text += "[scores]\nid mos score\n";
    for (std::size_t i = 0; i < scores.size(); ++i)
        text += recs[i].id + ' ' + format_real(recs[i].mos) + ' ' + format_real(scores[i]) + '\n';
    io::write_file_atomic(fs::path(o.out) / "report.txt", text);
    out << "scored " << scores.size() << " embeddings -> " << (fs::path(o.out) / "report.txt").string() << '\n';
    return kExitOk;
}

int run_finetune(const Options& o, std::ostream& out) {
    const RunConfigFile cfg = resolve_config(o);
    const fs::path dir = resolve_data(o, cfg);
    const Dataset ds = io::read_dataset(dir);
    const PromptBank bank = io::read_dataset_bank(dir, resolve_tau(o, cfg));
    const auto [train, test] = run_split(cfg.train, ds);

    const auto sizes = cfg.train.teacher_sizes(ds.obs_dim, bank.dim());
    EncoderParams teacher0 = init_params(sizes, seed_for(cfg.train.seed, SeedStream::teacher_init), cfg.train.activation);
    KeyValues kv{{"data", dir.string()}, {"train.n", std::to_string(train.size())}, {"test.split_n", std::to_string(test.size())},
                 {"teacher.parameters", std::to_string(teacher0.parameter_count())}};
    correlation_or_undefined([&] { return stage_guidance(bank, teacher0, test); }, kv, "guidance.test");
    const auto bank_before = fingerprint(bank);
    auto [teacher, rep] = finetune_teacher(cfg.train, bank, std::move(teacher0), train, &test);
    kv.emplace_back("bank.fingerprint.before", hex(bank_before));
    kv.emplace_back("bank.fingerprint.after", hex(fingerprint(bank)));

    io::write_checkpoint(fs::path(o.out) / "teacher.iqpw", {teacher, std::nullopt});
    io::write_file_atomic(fs::path(o.out) / "report.txt", format_run_report(rep, kv));
    out << "teacher test plcc " << format_real(rep.test->plcc) << " srcc " << format_real(rep.test->srcc) << '\n';
    return kExitOk;
}

int run_distill(const Options& o, std::ostream& out) {
    const RunConfigFile cfg = resolve_config(o);
    const fs::path dir = resolve_data(o, cfg);
    const Dataset ds = io::read_dataset(dir);
    const PromptBank bank = io::read_dataset_bank(dir, resolve_tau(o, cfg));
    const auto [train_idx, test_idx] = run_split_indices(cfg.train, ds.size());
    const auto [train, test] = run_split(cfg.train, ds);

    KeyValues kv{{"data", dir.string()}, {"train.n", std::to_string(train.size())}, {"test.split_n", std::to_string(test.size())}};
    std::optional<TeacherKnowledge> knowledge;
    if (!o.teacher_features.empty()) {
        if (!o.teacher.empty()) fail(ErrorKind::usage, "give either --teacher or --teacher-features, not both");
        const auto all = io::read_embeddings(o.teacher_features);
        if (all.size() != ds.size())
            fail(ErrorKind::data, o.teacher_features + " has " + std::to_string(all.size()) +
                                      " rows, dataset has " + std::to_string(ds.size()) + " samples");
        TeacherKnowledge k{bank, {}};
        for (std::size_t i : train_idx) k.image_features.push_back(all[i]);
        knowledge = std::move(k);
        kv.emplace_back("teacher.source", o.teacher_features);
    } else if (!o.teacher.empty()) {
        const io::Checkpoint ckpt = io::read_checkpoint(o.teacher);
        knowledge = extract_knowledge(bank, ckpt.encoder, train);
        kv.emplace_back("teacher.source", o.teacher);
        kv.emplace_back("teacher.parameters", std::to_string(ckpt.encoder.parameter_count()));
    } else {
        fail(ErrorKind::usage, "distill needs --teacher or --teacher-features");
    }

    const auto sizes = cfg.train.student_sizes(ds.obs_dim, bank.dim());
    EncoderParams student0 = init_params(sizes, seed_for(cfg.train.seed, SeedStream::student_init), cfg.train.activation);
    kv.emplace_back("student.parameters", std::to_string(student0.parameter_count()));
    const auto bank_before = fingerprint(knowledge->bank);
    const auto feats_before = fingerprint(knowledge->image_features);
    auto [student, rep] = distill_student(cfg.train, *knowledge, std::move(student0), train, &test);
    kv.emplace_back("bank.fingerprint.before", hex(bank_before));
    kv.emplace_back("bank.fingerprint.after", hex(fingerprint(knowledge->bank)));
    kv.emplace_back("teacher_features.fingerprint.before", hex(feats_before));
    kv.emplace_back("teacher_features.fingerprint.after", hex(fingerprint(knowledge->image_features)));

    io::write_checkpoint(fs::path(o.out) / "student.iqpw", {student, std::nullopt});
    io::write_file_atomic(fs::path(o.out) / "report.txt", format_run_report(rep, kv));
    out << "student test plcc " << format_real(rep.test->plcc) << " srcc " << format_real(rep.test->srcc) << '\n';
    return kExitOk;
}

int run_evaluate(const Options& o, std::ostream& out) {
    const RunConfigFile cfg = resolve_config(o);
    const fs::path dir = resolve_data(o, cfg);
    if (o.model.empty()) fail(ErrorKind::usage, "evaluate needs --model");
    const Dataset ds = io::read_dataset(dir);
    const io::Checkpoint ckpt = io::read_checkpoint(o.model);
    if (ckpt.encoder.input_dim() != ds.obs_dim)
        fail(ErrorKind::data, o.model + " expects " + std::to_string(ckpt.encoder.input_dim()) +
                                  " features, dataset has " + std::to_string(ds.obs_dim));
    const auto [train, test] = run_split(cfg.train, ds);

    RunReport rep;
    rep.stage = "evaluate";
    rep.seed = cfg.train.seed;
    rep.config = cfg.train;
    KeyValues kv{{"data", dir.string()}, {"model", o.model},
                 {"model.parameters", std::to_string(ckpt.encoder.parameter_count())},
                 {"model.scoring", ckpt.head ? "regression_head" : "prompt_bank"}};
    auto predict = [&](const Dataset& part) {
        if (ckpt.head) return predict_regression({ckpt.encoder, *ckpt.head}, part);
        const PromptBank bank = io::read_dataset_bank(dir, resolve_tau(o, cfg));
        return predict_scores(bank, ckpt.encoder, part);
    };
    correlation_or_undefined([&] { return correlate(predict(ds), ds.mos()); }, kv, "all");
    const auto pred = predict(test);
    const auto mos = test.mos();
    rep.test = correlate(pred, mos);
    io::write_file_atomic(fs::path(o.out) / "report.txt", format_run_report(rep, kv));
    out << "test plcc " << format_real(rep.test->plcc) << " srcc " << format_real(rep.test->srcc) << '\n';
    return kExitOk;
}

int run_ablate(const Options& o, std::ostream& out) {
    const RunConfigFile cfg = resolve_config(o);
    const fs::path dir = resolve_data(o, cfg);
    const Dataset ds = io::read_dataset(dir);
    const PromptBank bank = io::read_dataset_bank(dir, resolve_tau(o, cfg));
    const AblationReport rep = run_ablation(cfg.train, bank, ds);

    const fs::path out_dir = o.out;
    KeyValues kv{{"data", dir.string()}, {"n", std::to_string(ds.size())}};
    io::write_file_atomic(out_dir / "ablation.txt", format_ablation_summary(rep, kv));
    for (const auto& run : rep.runs) {
        const fs::path run_dir = out_dir / ("seed_" + std::to_string(run.seed));
        io::write_file_atomic(run_dir / "teacher.txt", format_run_report(run.teacher));
        for (std::size_t v = 0; v < kNumVariants; ++v)
            io::write_file_atomic(run_dir / ("variant" + std::to_string(v + 1) + "_" + kVariantNames[v] + ".txt"),
                                  format_run_report(run.variants[v]));
    }
    for (std::size_t v = 0; v < kNumVariants; ++v) {
        KeyValues med{{"median.plcc", format_real(rep.variants[v].median.plcc)},
                      {"median.srcc", format_real(rep.variants[v].median.srcc)},
                      {"median.runs", std::to_string(rep.variants[v].runs.size())}};
        io::write_file_atomic(out_dir / ("variant" + std::to_string(v + 1) + "_" + kVariantNames[v] + ".txt"),
                              format_run_report(rep.runs.front().variants[v], med));
    }
    out << "variant  median_plcc  median_srcc\n";
    out << "teacher  " << format_real(rep.teacher.median.plcc) << "  " << format_real(rep.teacher.median.srcc) << '\n';
    for (std::size_t v = 0; v < kNumVariants; ++v)
        out << '(' << v + 1 << ") " << kVariantNames[v] << "  " << format_real(rep.variants[v].median.plcc) << "  "
            << format_real(rep.variants[v].median.srcc) << '\n';
    return kExitOk;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::config: return kExitUsage;
        case ErrorKind::numeric: return kExitNumeric;
        default: return kExitData;
    }
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Knowledge distillation engine for prompt-guided image quality scoring", "kdiqa"};
    app.require_subcommand(1);
    Options o;

    auto* datagen = app.add_subcommand("datagen", "Generate a synthetic dataset and prompt bank");
    datagen->add_option("--n", o.n, "Number of samples")->required();
    datagen->add_option("--obs-dim", o.obs_dim, "Observation length")->required();
    datagen->add_option("--seed", o.seed, "Generator seed");
    datagen->add_option("--dim", o.dim, "Embedding dimension of the synthetic bank");
    datagen->add_option("--tau", o.tau, "Bank temperature");
    datagen->add_option("--bank-shared", o.bank_shared, "Fraction of each text row shared by all levels, in [0,1)");
    datagen->add_option("--content-scale", o.gen.content_scale, "Std of the content component");
    datagen->add_option("--signal-gain", o.gen.signal_gain, "Scale of the distortion projection");
    datagen->add_option("--jitter", o.gen.jitter, "Std of iid observation jitter");
    datagen->add_option("--out", o.out, "Output dataset directory")->required();

    auto* score = app.add_subcommand("score", "Score embeddings (or a model's encodings) through a prompt bank");
    score->add_option("--embeddings", o.embeddings, "EmbeddingFile with image features");
    score->add_option("--sidecar", o.sidecar, "ScoreSidecar aligned with --embeddings");
    score->add_option("--bank", o.bank, "Prompt bank .iqeb (temperature from sibling bank.json)");
    score->add_option("--data", o.data, "Dataset directory (with --model)");
    score->add_option("--model", o.model, "Encoder checkpoint");
    score->add_option("--tau", o.tau, "Override the bank temperature");
    score->add_option("--config", o.config, "Run config (JSON)");
    score->add_option("--out", o.out, "Output directory")->required();

    auto* finetune = app.add_subcommand("finetune-teacher", "Fine-tune the teacher encoder against MOS");
    finetune->add_option("--data", o.data, "Dataset directory");
    finetune->add_option("--config", o.config, "Run config (JSON)");
    finetune->add_option("--tau", o.tau, "Override the bank temperature");
    finetune->add_option("--out", o.out, "Output directory")->required();

    auto* distill = app.add_subcommand("distill", "Distill a student from teacher knowledge");
    distill->add_option("--data", o.data, "Dataset directory");
    distill->add_option("--config", o.config, "Run config (JSON)");
    distill->add_option("--teacher", o.teacher, "Teacher checkpoint");
    distill->add_option("--teacher-features", o.teacher_features, "EmbeddingFile of teacher features, one row per sample");
    distill->add_option("--tau", o.tau, "Override the bank temperature");
    distill->add_option("--out", o.out, "Output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the run's test split");
    evaluate->add_option("--data", o.data, "Dataset directory");
    evaluate->add_option("--model", o.model, "Checkpoint to evaluate");
    evaluate->add_option("--config", o.config, "Run config (JSON)");
    evaluate->add_option("--tau", o.tau, "Override the bank temperature");
    evaluate->add_option("--out", o.out, "Output directory")->required();

    auto* ablate = app.add_subcommand("ablate", "Run the four-variant ablation");
    ablate->add_option("--data", o.data, "Dataset directory");
    ablate->add_option("--config", o.config, "Run config (JSON)");
    ablate->add_option("--tau", o.tau, "Override the bank temperature");
    ablate->add_option("--out", o.out, "Output directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "kdiqa: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (datagen->parsed()) return run_datagen(o, out);
        if (score->parsed()) return run_score(o, out);
        if (finetune->parsed()) return run_finetune(o, out);
        if (distill->parsed()) return run_distill(o, out);
        if (evaluate->parsed()) return run_evaluate(o, out);
        if (ablate->parsed()) return run_ablate(o, out);
    } catch (const Error& e) {
        err << "kdiqa: " << to_string(e.kind()) << " error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "kdiqa: data error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace kdiqa
