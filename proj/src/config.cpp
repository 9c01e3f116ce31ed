#include "kdiqa/config.hpp"

#include <set>

#include "kdiqa/error.hpp"
#include "kdiqa/io.hpp"

namespace kdiqa {

using nlohmann::json;

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::shape: return "shape";
        case ErrorKind::domain: return "domain";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::format: return "format";
        case ErrorKind::corruption: return "corruption";
        case ErrorKind::undefined: return "undefined";
        case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

const char* to_string(BlendKind kind) { return kind == BlendKind::cosine ? "cosine" : "fixed"; }
const char* to_string(Granularity g) { return g == Granularity::epoch ? "epoch" : "step"; }
const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, "config key \"" + key + "\" has the wrong type");
    }
}

double get_number(const json& j, const std::string& key) {
    if (!j.at(key).is_number()) fail(ErrorKind::config, "config key \"" + key + "\" must be a number");
    return j.at(key).get<double>();
}

long get_integer(const json& j, const std::string& key) {
    if (!j.at(key).is_number_integer()) fail(ErrorKind::config, "config key \"" + key + "\" must be an integer");
    return j.at(key).get<long>();
}

std::vector<std::size_t> get_sizes(const json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_array()) fail(ErrorKind::config, "config key \"" + key + "\" must be an array of sizes");
    std::vector<std::size_t> out;
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<long>() < 1)
            fail(ErrorKind::config, "config key \"" + key + "\" must hold positive integers");
        out.push_back(e.get<std::size_t>());
    }
    return out;
}

}  // namespace

RunConfigFile parse_config(const json& j) {
    if (!j.is_object()) fail(ErrorKind::config, "config must be a JSON object");
    static const std::set<std::string> known = {
        "epochs", "batch_size", "lr0_teacher", "lr0_student", "lr_floor", "schedule", "lambda_fixed",
        "granularity", "seed", "repeat_count", "train_fraction", "teacher_hidden", "student_hidden",
        "activation", "beta1", "beta2", "eps", "weight_decay", "temperature", "data"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) fail(ErrorKind::config, "unknown config key \"" + key + "\"");

    RunConfigFile out;
    TrainConfig& c = out.train;
    if (j.contains("epochs")) c.epochs = get_integer(j, "epochs");
    if (j.contains("batch_size")) {
        const long bs = get_integer(j, "batch_size");
        if (bs < 1) fail(ErrorKind::config, "batch_size must be >= 1");
        c.batch_size = static_cast<std::size_t>(bs);
    }
    if (j.contains("lr0_teacher")) c.lr0_teacher = get_number(j, "lr0_teacher");
    if (j.contains("lr0_student")) c.lr0_student = get_number(j, "lr0_student");
    if (j.contains("lr_floor")) c.lr_floor = get_number(j, "lr_floor");
    if (j.contains("schedule")) {
        const auto s = get_as<std::string>(j, "schedule");
        if (s == "cosine") c.schedule = BlendKind::cosine;
        else if (s == "fixed") c.schedule = BlendKind::fixed;
        else fail(ErrorKind::config, "schedule must be \"cosine\" or \"fixed\"");
    }
    if (j.contains("lambda_fixed")) c.lambda_fixed = get_number(j, "lambda_fixed");
    if (j.contains("granularity")) {
        const auto s = get_as<std::string>(j, "granularity");
        if (s == "epoch") c.granularity = Granularity::epoch;
        else if (s == "step") c.granularity = Granularity::step;
        else fail(ErrorKind::config, "granularity must be \"epoch\" or \"step\"");
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) fail(ErrorKind::config, "seed must be a nonnegative integer");
        c.seed = j["seed"].get<unsigned long long>();
    }
    if (j.contains("repeat_count")) c.repeat_count = static_cast<int>(get_integer(j, "repeat_count"));
    if (j.contains("train_fraction")) c.train_fraction = get_number(j, "train_fraction");
    if (j.contains("teacher_hidden")) c.teacher_hidden = get_sizes(j, "teacher_hidden");
    if (j.contains("student_hidden")) c.student_hidden = get_sizes(j, "student_hidden");
    if (j.contains("activation")) {
        const auto s = get_as<std::string>(j, "activation");
        if (s == "tanh") c.activation = Activation::tanh;
        else if (s == "relu") c.activation = Activation::relu;
        else fail(ErrorKind::config, "activation must be \"tanh\" or \"relu\"");
    }
    if (j.contains("beta1")) c.adamw.beta1 = get_number(j, "beta1");
    if (j.contains("beta2")) c.adamw.beta2 = get_number(j, "beta2");
    if (j.contains("eps")) c.adamw.eps = get_number(j, "eps");
    if (j.contains("weight_decay")) c.adamw.weight_decay = get_number(j, "weight_decay");
    if (j.contains("temperature")) out.temperature = get_number(j, "temperature");
    if (j.contains("data")) out.data = get_as<std::string>(j, "data");
    c.validate();
    return out;
}

RunConfigFile load_config(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path.string() + ": " + e.what());
    }
    try {
        return parse_config(j);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

json to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lr0_teacher", c.lr0_teacher},
            {"lr0_student", c.lr0_student},
            {"lr_floor", c.lr_floor},
            {"schedule", to_string(c.schedule)},
            {"lambda_fixed", c.lambda_fixed},
            {"granularity", to_string(c.granularity)},
            {"seed", c.seed},
            {"repeat_count", c.repeat_count},
            {"train_fraction", c.train_fraction},
            {"teacher_hidden", c.teacher_hidden},
            {"student_hidden", c.student_hidden},
            {"activation", to_string(c.activation)},
            {"beta1", c.adamw.beta1},
            {"beta2", c.adamw.beta2},
            {"eps", c.adamw.eps},
            {"weight_decay", c.adamw.weight_decay}};
}

}  // namespace kdiqa
