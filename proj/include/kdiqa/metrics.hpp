#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdiqa {

struct CorrelationReport {
    double plcc = 0.0;
    double srcc = 0.0;
    std::size_t n = 0;
};

/// Pearson linear correlation. Throws ErrorKind::undefined for constant input.
double plcc(std::span<const double> x, std::span<const double> y);

/// 1-based ranks; tied values share the mean of their rank block.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation computed as Pearson on average ranks.
double srcc(std::span<const double> x, std::span<const double> y);

CorrelationReport correlate(std::span<const double> pred, std::span<const double> truth);

}  // namespace kdiqa
