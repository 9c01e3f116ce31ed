#include "kdiqa/report.hpp"

#include <cstdio>
#include <sstream>

#include "kdiqa/config.hpp"

namespace kdiqa {

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void put(std::ostringstream& out, const std::string& key, const std::string& value) {
    out << key << " = " << value << '\n';
}

std::string json_scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_float()) return format_real(v.get<double>());
    if (v.is_array()) {
        std::string s;
        for (const auto& e : v) s += (s.empty() ? "" : ",") + json_scalar(e);
        return s;
    }
    return v.dump();
}

void put_config(std::ostringstream& out, const TrainConfig& cfg) {
    // nlohmann::json objects iterate in sorted key order.
    const nlohmann::json j = to_json(cfg);
    for (const auto& [key, value] : j.items()) put(out, "config." + key, json_scalar(value));
    put(out, "lr0_teacher.paper_default", format_real(kPaperLrTeacher));
    put(out, "lr0_teacher.overridden", cfg.lr0_teacher != kPaperLrTeacher ? "true" : "false");
    put(out, "lr0_student.paper_default", format_real(kPaperLrStudent));
    put(out, "lr0_student.overridden", cfg.lr0_student != kPaperLrStudent ? "true" : "false");
}

void put_correlation(std::ostringstream& out, const std::string& prefix, const CorrelationReport& r) {
    put(out, prefix + ".n", std::to_string(r.n));
    put(out, prefix + ".plcc", format_real(r.plcc));
    put(out, prefix + ".srcc", format_real(r.srcc));
}

}  // namespace

std::string format_run_report(const RunReport& report, const KeyValues& extra) {
    std::ostringstream out;
    out << "# kdiqa run report\n";
    put(out, "stage", report.stage);
    put(out, "seed", std::to_string(report.seed));
    put_config(out, report.config);
    for (const auto& [k, v] : extra) put(out, k, v);
    put(out, "audit.soft_loss_evaluations", std::to_string(report.soft_loss_evaluations));
    put(out, "audit.hard_loss_evaluations", std::to_string(report.hard_loss_evaluations));
    if (report.test) put_correlation(out, "test", *report.test);
    if (!report.epochs.empty()) {
        put(out, "final.soft_loss", format_real(report.epochs.back().soft_loss));
        put(out, "final.hard_loss", format_real(report.epochs.back().hard_loss));
        out << "[epochs]\n";
        out << "epoch lambda lr soft_loss hard_loss\n";
        for (const auto& row : report.epochs)
            out << row.epoch << ' ' << format_real(row.lambda) << ' ' << format_real(row.lr) << ' '
                << format_real(row.soft_loss) << ' ' << format_real(row.hard_loss) << '\n';
    }
    return out.str();
}

std::string format_ablation_summary(const AblationReport& report, const KeyValues& extra) {
    std::ostringstream out;
    out << "# kdiqa ablation report\n";
    put(out, "stage", "ablate");
    put(out, "seed", std::to_string(report.config.seed));
    put_config(out, report.config);
    for (const auto& [k, v] : extra) put(out, k, v);
    put_correlation(out, "teacher.median", report.teacher.median);
    for (std::size_t v = 0; v < kNumVariants; ++v)
        put_correlation(out, "variant" + std::to_string(v + 1) + "." + kVariantNames[v] + ".median",
                        report.variants[v].median);
    out << "[runs]\n";
    out << "seed model plcc srcc\n";
    for (std::size_t r = 0; r < report.runs.size(); ++r) {
        const auto& run = report.runs[r];
        out << run.seed << " teacher " << format_real(run.teacher.test->plcc) << ' '
            << format_real(run.teacher.test->srcc) << '\n';
        for (std::size_t v = 0; v < kNumVariants; ++v)
            out << run.seed << " variant" << v + 1 << '_' << kVariantNames[v] << ' '
                << format_real(run.variants[v].test->plcc) << ' ' << format_real(run.variants[v].test->srcc)
                << '\n';
    }
    return out.str();
}

KeyValues parse_report_header(const std::string& text) {
    KeyValues out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line[0] == '[') break;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) continue;
        out.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    return out;
}

}  // namespace kdiqa
