#include "kdiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kdiqa/error.hpp"

namespace kdiqa {

namespace {

void check_pair(std::span<const double> x, std::span<const double> y, const char* who) {
    if (x.size() != y.size())
        fail(ErrorKind::shape, std::string(who) + ": length mismatch " + std::to_string(x.size()) +
                                   " vs " + std::to_string(y.size()));
    if (x.size() < 3)
        fail(ErrorKind::shape, std::string(who) + ": need at least 3 samples, got " +
                                   std::to_string(x.size()));
}

double pearson(std::span<const double> x, std::span<const double> y, const char* who) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        fail(ErrorKind::undefined, std::string(who) + ": correlation undefined for a constant sequence");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double plcc(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "plcc");
    return pearson(x, y, "plcc");
}

std::vector<double> average_ranks(std::span<const double> x) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
        // positions i..j (0-based) share ranks i+1..j+1
        const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mean_rank;
        i = j + 1;
    }
    return ranks;
}

double srcc(std::span<const double> x, std::span<const double> y) {
    check_pair(x, y, "srcc");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson(rx, ry, "srcc");
}

CorrelationReport correlate(std::span<const double> pred, std::span<const double> truth) {
    return {plcc(pred, truth), srcc(pred, truth), pred.size()};
}

}  // namespace kdiqa
