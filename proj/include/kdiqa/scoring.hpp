#pragma once

// Prompt-guided quality scoring: an image embedding is compared against five
// frozen quality-level text features by cosine similarity, the similarities
// are sharpened by a temperature softmax, and the resulting distribution over
// levels is collapsed to a scalar score in [1, 5].

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdiqa/linalg.hpp"

namespace kdiqa {

inline constexpr std::size_t kNumLevels = 5;
inline constexpr std::array<std::string_view, kNumLevels> kLevelNames = {
    "bad", "poor", "fair", "good", "perfect"};
inline constexpr std::array<double, kNumLevels> kLevelWeights = {1.0, 2.0, 3.0, 4.0, 5.0};
inline constexpr double kDefaultTemperature = 0.07;

/// Text template for quality level `level` (0 = bad ... 4 = perfect).
std::string level_prompt(std::size_t level);

/// Fixed-dimension feature vector produced by an image encoder.
struct Embedding {
    Vec values;

    Embedding() = default;
    explicit Embedding(Vec v) : values(std::move(v)) {}

    std::size_t dim() const noexcept { return values.size(); }
    std::span<const double> view() const noexcept { return values; }
    bool operator==(const Embedding&) const = default;
};

/// Frozen quality-semantic knowledge: one text feature per level, ordered
/// bad -> perfect, plus the softmax temperature.
class PromptBank {
public:
    /// Validates shape (5 rows), nonzero rows, finiteness and tau > 0.
    PromptBank(Matrix text_features, double temperature = kDefaultTemperature);

    const Matrix& text_features() const noexcept { return text_; }
    std::span<const double> row(std::size_t level) const { return text_.row(level); }
    double row_norm(std::size_t level) const { return row_norms_[level]; }
    double temperature() const noexcept { return tau_; }
    std::size_t dim() const noexcept { return text_.cols(); }
    static constexpr const std::array<double, kNumLevels>& weights() { return kLevelWeights; }

private:
    Matrix text_;
    std::array<double, kNumLevels> row_norms_{};
    double tau_;
};

struct QualityDistribution {
    std::array<double, kNumLevels> probs{};
};

using Similarities = std::array<double, kNumLevels>;

double cosine_similarity(std::span<const double> a, std::span<const double> b);
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
    return cosine_similarity(a.view(), b.view());
}

Similarities level_similarities(std::span<const double> img, const PromptBank& bank);

/// Temperature softmax with max-subtraction.
QualityDistribution softmax_levels(const Similarities& sims, double temperature);

QualityDistribution quality_distribution(std::span<const double> img, const PromptBank& bank);
inline QualityDistribution quality_distribution(const Embedding& img, const PromptBank& bank) {
    return quality_distribution(img.view(), bank);
}

double expected_score(const QualityDistribution& p, const PromptBank& bank);

inline double score(std::span<const double> img, const PromptBank& bank) {
    return expected_score(quality_distribution(img, bank), bank);
}

/// Serial reference for batched scoring. See kernels.hpp for the parallel one.
std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank);

/// Deterministic synthetic bank of five unit rows. Each row is
/// sqrt(shared) * c + sqrt(1 - shared) * arc_i, where c is a random direction
/// common to all levels and arc_i walks a quarter circle in a random plane
/// orthogonal to c, so rows i and j have cosine shared + (1 - shared) cos(angle_i - angle_j).
PromptBank make_synthetic_bank(std::size_t dim, double temperature, unsigned long long seed,
                               double shared = 0.0);

}  // namespace kdiqa
