#pragma once

// On-disk formats.
//
// EmbeddingFile (.iqeb), all integers little-endian:
//   "IQEB" | u32 version = 1 | u32 count | u32 dim | count*dim f32, row-major
//
// Checkpoint (.iqpw) reuses the container with magic "IQPW", count = 1 and
// dim = number of stored floats, followed by a layer-shape preamble before
// the payload:
//   u32 activation (0 tanh, 1 relu) | u32 n_sizes | n_sizes * u32 layer size |
//   u32 has_head
// Payload order: per layer weight (row-major) then bias; then head weight
// and head bias when has_head = 1.
//
// ScoreSidecar (.jsonl): one JSON object per embedding row,
//   {"id": str, "mos": real, "raw_score": real (optional)}
//
// Dataset directory: observations.iqeb, scores.jsonl, bank.iqeb, bank.json.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kdiqa/data.hpp"
#include "kdiqa/nets.hpp"
#include "kdiqa/scoring.hpp"

namespace kdiqa::io {

inline constexpr std::uint32_t kFormatVersion = 1;

std::vector<Embedding> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path, std::span<const Embedding> rows);

struct SidecarRecord {
    std::string id;
    double mos = 0.0;
    std::optional<double> raw_score;
};

std::vector<SidecarRecord> read_sidecar(const std::filesystem::path& path);
void write_sidecar(const std::filesystem::path& path, std::span<const SidecarRecord> records);

struct Checkpoint {
    EncoderParams encoder;
    std::optional<RegressionHead> head;
};

Checkpoint read_checkpoint(const std::filesystem::path& path);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// bank.iqeb holds the five text rows; the sibling bank.json holds the
/// temperature, level names and prompt strings.
PromptBank read_bank(const std::filesystem::path& iqeb_path, std::optional<double> temperature_override = {});
void write_bank(const std::filesystem::path& dir, const PromptBank& bank);

void write_dataset(const std::filesystem::path& dir, const Dataset& ds, const PromptBank& bank);
Dataset read_dataset(const std::filesystem::path& dir);
PromptBank read_dataset_bank(const std::filesystem::path& dir, std::optional<double> temperature_override = {});

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace kdiqa::io
