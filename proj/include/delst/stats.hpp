#pragma once

#include <optional>
#include <span>
#include <vector>

namespace delst::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double stddev(std::span<const double> x);
double median(std::vector<double> x);

/// Ranks starting at 1, ties get the average rank.
std::vector<double> average_ranks(std::span<const double> x);

/// Spearman rank correlation; empty when either side is constant or n < 2.
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

}  // namespace delst::stats
