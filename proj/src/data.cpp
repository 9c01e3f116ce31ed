#include "kdiqa/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <random>

#include "kdiqa/error.hpp"

namespace kdiqa {

std::vector<double> Dataset::mos() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.mos);
    return out;
}

void Dataset::validate() const {
    if (samples.empty()) fail(ErrorKind::data, "dataset is empty");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (s.obs.size() != obs_dim)
            fail(ErrorKind::data, "sample " + std::to_string(i) + " has " +
                                      std::to_string(s.obs.size()) + " features, expected " +
                                      std::to_string(obs_dim));
        if (!all_finite(s.obs))
            fail(ErrorKind::data, "sample " + std::to_string(i) + " has non-finite features");
        if (!(s.mos >= 1.0 && s.mos <= 5.0))
            fail(ErrorKind::data, "sample " + std::to_string(i) + " mos " + std::to_string(s.mos) +
                                      " outside [1,5]");
    }
}

Dataset generate(std::size_t n, std::size_t obs_dim, unsigned long long seed,
                 const GeneratorOptions& options) {
    if (n < 10) fail(ErrorKind::config, "generate: n must be >= 10");
    if (obs_dim < 4) fail(ErrorKind::config, "generate: obs_dim must be >= 4");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    constexpr std::size_t kBasis = 3;
    Matrix projection(obs_dim, kBasis);
    for (auto& v : projection.flat()) v = options.signal_gain * gauss(rng);

    Dataset ds;
    ds.obs_dim = obs_dim;
    ds.seed = seed;
    ds.provenance = Provenance::synthetic;
    ds.samples.reserve(n);
    char id[32];
    for (std::size_t i = 0; i < n; ++i) {
        const double z = unit(rng);
        const double basis[kBasis] = {z, z * z, std::sin(std::numbers::pi * z)};
        Sample s;
        std::snprintf(id, sizeof id, "s%06zu", i);
        s.id = id;
        s.mos = 1.0 + 4.0 * (1.0 - z);
        s.obs.resize(obs_dim);
        for (std::size_t j = 0; j < obs_dim; ++j) {
            double structured = 0.0;
            for (std::size_t b = 0; b < kBasis; ++b) structured += projection(j, b) * basis[b];
            const double content = options.content_scale * gauss(rng);
            s.obs[j] = content + structured + options.jitter * gauss(rng);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<double> normalize_mos(std::span<const double> raw, double lo, double hi, bool invert) {
    if (!(hi > lo)) fail(ErrorKind::config, "normalize_mos: need hi > lo");
    std::vector<double> out(raw.size());
    const double span = hi - lo;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double r = raw[i];
        if (!(r >= lo && r <= hi))
            fail(ErrorKind::data, "normalize_mos: value " + std::to_string(r) + " at index " +
                                      std::to_string(i) + " outside [" + std::to_string(lo) +
                                      ", " + std::to_string(hi) + "]");
        const double unit = (r - lo) / span;
        out[i] = invert ? 5.0 - 4.0 * unit : 1.0 + 4.0 * unit;
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                             double train_fraction,
                                                                             unsigned long long seed) {
    if (n < 5) fail(ErrorKind::config, "split: dataset needs at least 5 samples, has " + std::to_string(n));
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        fail(ErrorKind::config, "split: train fraction must lie in (0,1)");
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
    if (n_train == 0 || n_train == n) fail(ErrorKind::config, "split: fraction leaves one side empty");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    order.resize(n_train);
    return {std::move(order), std::move(test)};
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, unsigned long long seed) {
    const auto [train_idx, test_idx] = split_indices(ds.size(), train_fraction, seed);
    std::pair<Dataset, Dataset> out;
    for (Dataset* part : {&out.first, &out.second}) {
        part->obs_dim = ds.obs_dim;
        part->seed = seed;
        part->provenance = ds.provenance;
    }
    out.first.samples.reserve(train_idx.size());
    for (std::size_t i : train_idx) out.first.samples.push_back(ds.samples[i]);
    out.second.samples.reserve(test_idx.size());
    for (std::size_t i : test_idx) out.second.samples.push_back(ds.samples[i]);
    return out;
}

}  // namespace kdiqa
