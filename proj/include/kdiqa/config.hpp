#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "kdiqa/pipeline.hpp"

namespace kdiqa {

/// Environment variable naming the config file used when --config is absent.
inline constexpr const char* kConfigEnvVar = "KDIQA_CONFIG";

/// Keys (all optional, defaults from TrainConfig):
///   epochs, batch_size, lr0_teacher, lr0_student, lr_floor,
///   schedule ("cosine" | "fixed"), lambda_fixed, granularity ("epoch" | "step"),
///   seed, repeat_count, train_fraction, teacher_hidden, student_hidden,
///   activation ("tanh" | "relu"), beta1, beta2, eps, weight_decay,
///   temperature (overrides the bank's), data (dataset directory).
/// Unknown keys are a config error.
struct RunConfigFile {
    TrainConfig train;
    std::optional<double> temperature;
    std::optional<std::string> data;
};

RunConfigFile parse_config(const nlohmann::json& j);
RunConfigFile load_config(const std::filesystem::path& path);
nlohmann::json to_json(const TrainConfig& cfg);

const char* to_string(BlendKind kind);
const char* to_string(Granularity g);
const char* to_string(Activation a);

}  // namespace kdiqa
