#pragma once

#include <span>
#include <vector>

#include "fgns/image.hpp"

namespace fgns {

/// L2 distance between two rasters of equal shape.
double euclidean(const Image& a, const Image& b);

/// Summary statistics. Quartiles use the inclusive-median (Tukey hinge)
/// convention: for odd n the median belongs to both halves.
struct Descriptives {
    std::size_t n = 0;
    double mean = 0.0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double variance = 0.0;  ///< sample variance (n - 1 denominator)
    double sd = 0.0;
    double min = 0.0;
    double max = 0.0;
};

Descriptives describe(std::span<const double> xs);

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;            ///< two-sided
    bool degenerate = false;   ///< zero variance in both samples with unequal means
};

/// Student's pooled-variance two-sample t-test, df = n1 + n2 - 2.
TTestResult two_sample_t(std::span<const double> xs, std::span<const double> ys);

/// Welch's unequal-variance t-test with Welch-Satterthwaite df.
TTestResult welch_t(std::span<const double> xs, std::span<const double> ys);

struct HistogramBin {
    double left = 0.0;
    double right = 0.0;
    std::vector<std::size_t> counts;  ///< one per series
};

/// Shared equal-width bins over the union range of every series.
std::vector<HistogramBin> histogram(const std::vector<std::vector<double>>& series, int bins);

}  // namespace fgns
