#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "condwalk/error.hpp"

namespace condwalk::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Unbiased sample variance; 0 for fewer than two values.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double standard_error(std::span<const double> x) {
  return x.size() < 2 ? 0.0 : std::sqrt(variance(x) / static_cast<double>(x.size()));
}

inline double median(std::vector<double> x) {
  if (x.empty()) fail(ErrorKind::kInsufficientData, "median of empty sample");
  const auto n = x.size();
  std::nth_element(x.begin(), x.begin() + n / 2, x.end());
  double hi = x[n / 2];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(x.begin(), x.begin() + n / 2);
  return 0.5 * (lo + hi);
}

struct Interval {
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double stderr_ = 0.0;
  std::size_t batches = 0;

  bool excludes_zero() const noexcept { return lo > 0.0 || hi < 0.0; }
};

inline constexpr std::size_t kMinBatches = 10;

/// Batch-means confidence interval for the mean of `x` (kept in order):
/// consecutive values are grouped into `n_batches` batches and a Student-t
/// interval is formed from the batch means. Refuses fewer than 10 batches.
inline Interval batch_means(std::span<const double> x, std::size_t n_batches = kMinBatches, double level = 0.95) {
  if (n_batches < kMinBatches) fail(ErrorKind::kInsufficientData, "batch means need at least 10 batches");
  if (x.size() < n_batches) fail(ErrorKind::kInsufficientData, "fewer observations than batches");
  std::vector<double> bm(n_batches, 0.0);
  const std::size_t per = x.size() / n_batches;
  for (std::size_t b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) s += x[i];
    bm[b] = s / static_cast<double>(per);
  }
  Interval iv;
  iv.batches = n_batches;
  iv.estimate = mean(std::span<const double>(x.data(), per * n_batches));
  iv.stderr_ = standard_error(bm);
  const boost::math::students_t t(static_cast<double>(n_batches - 1));
  const double q = boost::math::quantile(boost::math::complement(t, (1.0 - level) / 2.0));
  iv.lo = iv.estimate - q * iv.stderr_;
  iv.hi = iv.estimate + q * iv.stderr_;
  return iv;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares y = a + b x.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) fail(ErrorKind::kInsufficientData, "least squares needs two points");
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) fail(ErrorKind::kDegenerate, "least squares with constant abscissa");
  LinearFit f;
  f.n = x.size();
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += r * r;
    }
    f.slope_stderr = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
  }
  return f;
}

/// Log-log slope of the empirical survival function P[X > t] over `n_points`
/// log-spaced thresholds between `t_lo` and `t_hi`; thresholds with fewer than
/// `min_exceed` exceedances are dropped. Returns nullopt with < 2 usable points.
inline std::optional<LinearFit> survival_slope(std::vector<double> samples, double t_lo, double t_hi,
                                               int n_points = 20, std::size_t min_exceed = 10) {
  if (samples.empty() || !(t_lo > 0.0) || !(t_hi > t_lo)) return std::nullopt;
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  std::vector<double> lx, ly;
  for (int k = 0; k < n_points; ++k) {
    const double t = t_lo * std::pow(t_hi / t_lo, static_cast<double>(k) / (n_points - 1));
    const auto above = static_cast<std::size_t>(samples.end() - std::upper_bound(samples.begin(), samples.end(), t));
    if (above < min_exceed) continue;
    lx.push_back(std::log(t));
    ly.push_back(std::log(static_cast<double>(above) / n));
  }
  if (lx.size() < 2) return std::nullopt;
  return least_squares(lx, ly);
}

/// Empirical quantile (type 1, inverse of the empirical CDF).
inline double quantile(std::vector<double> x, double q) {
  if (x.empty()) fail(ErrorKind::kInsufficientData, "quantile of empty sample");
  std::sort(x.begin(), x.end());
  const auto idx = static_cast<std::size_t>(std::clamp(std::ceil(q * static_cast<double>(x.size())) - 1.0, 0.0,
                                                       static_cast<double>(x.size() - 1)));
  return x[idx];
}

/// Lag-1 autocorrelation over the given (segment-wise) sequences; pairs never
/// cross segment boundaries. Absent when the pooled variance vanishes or
/// there are no pairs.
inline std::optional<double> lag1_autocorrelation(const std::vector<std::vector<double>>& segments) {
  std::vector<double> all;
  for (const auto& s : segments) all.insert(all.end(), s.begin(), s.end());
  if (all.size() < 3) return std::nullopt;
  const double m = mean(all);
  double var = 0.0;
  for (double v : all) var += (v - m) * (v - m);
  var /= static_cast<double>(all.size());
  if (!(var > 0.0)) return std::nullopt;
  double cov = 0.0;
  std::size_t pairs = 0;
  for (const auto& s : segments) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      cov += (s[i] - m) * (s[i - 1] - m);
      ++pairs;
    }
  }
  if (pairs == 0) return std::nullopt;
  return cov / static_cast<double>(pairs) / var;
}

/// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
inline double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic KS critical value sqrt(-ln(alpha/2)/2) / sqrt(n).
inline double ks_critical(std::size_t n, double alpha) {
  return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

}  // namespace condwalk::stats
