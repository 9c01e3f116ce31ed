#include "kdiqa/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "kdiqa/error.hpp"

namespace kdiqa {

std::string level_prompt(std::size_t level) {
    return "a photo of " + std::string(kLevelNames.at(level)) + " quality";
}

PromptBank::PromptBank(Matrix text_features, double temperature)
    : text_(std::move(text_features)), tau_(temperature) {
    if (text_.rows() != kNumLevels)
        fail(ErrorKind::shape, "prompt bank needs exactly 5 text rows, got " +
                                   std::to_string(text_.rows()));
    if (text_.cols() == 0) fail(ErrorKind::shape, "prompt bank rows are empty");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        fail(ErrorKind::domain, "temperature must be finite and > 0");
    for (std::size_t i = 0; i < kNumLevels; ++i) {
        if (!all_finite(text_.row(i)))
            fail(ErrorKind::numeric, "non-finite value in text row " + std::to_string(i));
        row_norms_[i] = norm(text_.row(i));
        if (row_norms_[i] == 0.0)
            fail(ErrorKind::domain, "text row " + std::to_string(i) + " (" +
                                        std::string(kLevelNames[i]) + ") is the zero vector");
    }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail(ErrorKind::shape, "cosine_similarity: dim mismatch " + std::to_string(a.size()) +
                                   " vs " + std::to_string(b.size()));
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0) fail(ErrorKind::domain, "cosine_similarity: argument a has zero norm");
    if (nb == 0.0) fail(ErrorKind::domain, "cosine_similarity: argument b has zero norm");
    const double c = dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Similarities level_similarities(std::span<const double> img, const PromptBank& bank) {
    if (img.size() != bank.dim())
        fail(ErrorKind::shape, "image embedding dim " + std::to_string(img.size()) +
                                   " does not match bank dim " + std::to_string(bank.dim()));
    const double ni = norm(img);
    if (ni == 0.0) fail(ErrorKind::domain, "image embedding has zero norm");
    Similarities s{};
    for (std::size_t i = 0; i < kNumLevels; ++i)
        s[i] = std::clamp(dot(img, bank.row(i)) / (ni * bank.row_norm(i)), -1.0, 1.0);
    return s;
}

QualityDistribution softmax_levels(const Similarities& sims, double temperature) {
    double top = sims[0];
    for (double s : sims) {
        if (std::isnan(s)) fail(ErrorKind::numeric, "NaN similarity entering softmax");
        top = std::max(top, s);
    }
    QualityDistribution p;
    double total = 0.0;
    for (std::size_t i = 0; i < kNumLevels; ++i) {
        p.probs[i] = std::exp((sims[i] - top) / temperature);
        total += p.probs[i];
    }
    for (double& v : p.probs) v /= total;
    return p;
}

QualityDistribution quality_distribution(std::span<const double> img, const PromptBank& bank) {
    return softmax_levels(level_similarities(img, bank), bank.temperature());
}

double expected_score(const QualityDistribution& p, const PromptBank& bank) {
    const auto& w = bank.weights();
    double s = 0.0;
    for (std::size_t i = 0; i < kNumLevels; ++i) s += p.probs[i] * w[i];
    return s;
}

std::vector<double> score_batch(std::span<const Embedding> imgs, const PromptBank& bank) {
    if (imgs.empty()) fail(ErrorKind::shape, "score_batch: empty batch");
    std::vector<double> out(imgs.size());
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        try {
            out[i] = score(imgs[i].view(), bank);
        } catch (const Error& e) {
            fail(e.kind(), "score_batch: element " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

PromptBank make_synthetic_bank(std::size_t dim, double temperature, unsigned long long seed, double shared) {
    if (dim < 3) fail(ErrorKind::config, "synthetic bank needs dim >= 3");
    if (!(shared >= 0.0 && shared < 1.0)) fail(ErrorKind::config, "synthetic bank shared fraction must lie in [0,1)");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    // Gram-Schmidt on three random directions: c, a, b.
    std::array<Vec, 3> basis;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        Vec& v = basis[k];
        v.resize(dim);
        for (auto& x : v) x = gauss(rng);
        for (std::size_t p = 0; p < k; ++p) {
            const double proj = dot(basis[p], v);
            for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * basis[p][j];
        }
        const double n = norm(v);
        for (auto& x : v) x /= n;
    }
    const auto& [c, a, b] = basis;
    const double wc = std::sqrt(shared);
    const double wa = std::sqrt(1.0 - shared);

    Matrix text(kNumLevels, dim);
    for (std::size_t level = 0; level < kNumLevels; ++level) {
        const double angle = std::numbers::pi / 2.0 * static_cast<double>(level) /
                             static_cast<double>(kNumLevels - 1);
        for (std::size_t j = 0; j < dim; ++j)
            text(level, j) = wc * c[j] + wa * (std::cos(angle) * a[j] + std::sin(angle) * b[j]);
    }
    return PromptBank(std::move(text), temperature);
}

}  // namespace kdiqa
