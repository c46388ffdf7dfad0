#include "fgns/stats.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fgns/errors.hpp"

namespace fgns {

namespace {

double median_sorted(std::span<const double> s) {
    const std::size_t n = s.size();
    if (n == 0) return 0.0;
    return n % 2 == 1 ? s[n / 2] : (s[n / 2 - 1] + s[n / 2]) / 2.0;
}

double mean_of(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sum_sq_dev(std::span<const double> xs, double mean) {
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return s;
}

double two_sided_p(double t, double df) {
    if (std::isinf(t)) return 0.0;
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

void require_pair(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() < 2 || ys.size() < 2) throw ArgumentError("t-test: each sample needs at least 2 observations");
}

TTestResult degenerate_result(double mx, double my, double df) {
    TTestResult r;
    r.df = df;
    if (mx == my) {
        r.t = 0.0;
        r.p = 1.0;
    } else {
        r.t = mx > my ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
        r.p = 0.0;
        r.degenerate = true;
    }
    return r;
}

}  // namespace

double euclidean(const Image& a, const Image& b) {
    require_same_shape(a.shape, b.shape, "euclidean");
    double s = 0.0;
    for (std::size_t p = 0; p < a.pixels.size(); ++p) {
        const double d = a.pixels[p] - b.pixels[p];
        s += d * d;
    }
    return std::sqrt(s);
}

Descriptives describe(std::span<const double> xs) {
    Descriptives d;
    d.n = xs.size();
    if (xs.empty()) return d;
    std::vector<double> s(xs.begin(), xs.end());
    std::sort(s.begin(), s.end());
    d.mean = mean_of(s);
    d.median = median_sorted(s);
    const std::size_t half = (s.size() + 1) / 2;  // inclusive of the median when n is odd
    d.q1 = median_sorted(std::span<const double>(s).first(half));
    d.q3 = median_sorted(std::span<const double>(s).last(half));
    d.iqr = d.q3 - d.q1;
    d.variance = s.size() > 1 ? sum_sq_dev(s, d.mean) / static_cast<double>(s.size() - 1) : 0.0;
    d.sd = std::sqrt(d.variance);
    d.min = s.front();
    d.max = s.back();
    return d;
}

TTestResult two_sample_t(std::span<const double> xs, std::span<const double> ys) {
    require_pair(xs, ys);
    const double n1 = static_cast<double>(xs.size());
    const double n2 = static_cast<double>(ys.size());
    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    const double df = n1 + n2 - 2.0;
    const double pooled = (sum_sq_dev(xs, mx) + sum_sq_dev(ys, my)) / df;
    if (pooled == 0.0) return degenerate_result(mx, my, df);
    TTestResult r;
    r.df = df;
    r.t = (mx - my) / std::sqrt(pooled * (1.0 / n1 + 1.0 / n2));
    r.p = two_sided_p(r.t, df);
    return r;
}

TTestResult welch_t(std::span<const double> xs, std::span<const double> ys) {
    require_pair(xs, ys);
    const double n1 = static_cast<double>(xs.size());
    const double n2 = static_cast<double>(ys.size());
    const double mx = mean_of(xs);
    const double my = mean_of(ys);
    const double v1 = sum_sq_dev(xs, mx) / (n1 - 1.0) / n1;
    const double v2 = sum_sq_dev(ys, my) / (n2 - 1.0) / n2;
    if (v1 + v2 == 0.0) return degenerate_result(mx, my, n1 + n2 - 2.0);
    TTestResult r;
    r.t = (mx - my) / std::sqrt(v1 + v2);
    r.df = (v1 + v2) * (v1 + v2) / (v1 * v1 / (n1 - 1.0) + v2 * v2 / (n2 - 1.0));
    r.p = two_sided_p(r.t, r.df);
    return r;
}

std::vector<HistogramBin> histogram(const std::vector<std::vector<double>>& series, int bins) {
    if (bins < 1) throw ArgumentError("histogram: need at least one bin");
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : series) {
        for (double v : s) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!std::isfinite(lo)) return {};
    if (hi == lo) hi = lo + 1.0;
    const double width = (hi - lo) / bins;
    std::vector<HistogramBin> out(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b) {
        out[static_cast<std::size_t>(b)].left = lo + b * width;
        out[static_cast<std::size_t>(b)].right = b + 1 == bins ? hi : lo + (b + 1) * width;
        out[static_cast<std::size_t>(b)].counts.assign(series.size(), 0);
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        for (double v : series[k]) {
            auto b = static_cast<int>((v - lo) / width);
            b = std::clamp(b, 0, bins - 1);
            out[static_cast<std::size_t>(b)].counts[k] += 1;
        }
    }
    return out;
}

}  // namespace fgns
