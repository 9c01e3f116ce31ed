#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kdiqa/linalg.hpp"

namespace kdiqa {

struct Sample {
    std::string id;
    Vec obs;
    double mos = 0.0;  // subjective score on the [1, 5] scale
};

enum class Provenance { synthetic, imported };

struct Dataset {
    std::vector<Sample> samples;
    std::size_t obs_dim = 0;
    unsigned long long seed = 0;
    Provenance provenance = Provenance::synthetic;

    std::size_t size() const noexcept { return samples.size(); }
    std::vector<double> mos() const;
    /// Throws when empty, ragged, non-finite, or a MOS is outside [1, 5].
    void validate() const;
};

/// Knobs of the synthetic generator. Each sample draws a latent distortion
/// z ~ U[0, 1] and sets mos = 1 + 4 (1 - z); its observation is a random
/// content vector plus a fixed random projection of (z, z^2, sin(pi z)) plus
/// iid jitter.
struct GeneratorOptions {
    double content_scale = 0.5;
    double signal_gain = 1.0;
    double jitter = 0.01;
};

Dataset generate(std::size_t n, std::size_t obs_dim, unsigned long long seed,
                 const GeneratorOptions& options = {});

/// Latent distortion corresponding to a synthetic MOS.
inline double latent_from_mos(double mos) { return 1.0 - (mos - 1.0) / 4.0; }

/// Linear map of [lo, hi] onto [1, 5]; `invert` flips orientation for
/// lower-is-better scales.
std::vector<double> normalize_mos(std::span<const double> raw, double lo, double hi, bool invert);

/// Seeded shuffle into disjoint train/test parts; train gets round-half-up
/// of train_fraction * n samples.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                             double train_fraction,
                                                                             unsigned long long seed);
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, unsigned long long seed);

}  // namespace kdiqa
