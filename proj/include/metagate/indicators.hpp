#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string_view>
#include <vector>

#include "metagate/errors.hpp"
#include "metagate/market_data.hpp"

namespace metagate {

struct WindowStats {
  double min = 0;
  double max = 0;
  double mean = 0;
};

enum class LineKind { Support, Resistance };

inline std::string_view to_string(LineKind k) { return k == LineKind::Support ? "support" : "resistance"; }

/// y = intercept + slope * k, with k = 0 at the first candle of the window the line was fitted on.
struct TrendLine {
  double slope = 0;
  double intercept = 0;
  LineKind kind = LineKind::Support;

  double at(double k) const { return intercept + slope * k; }
};

struct CandleGeometry {
  double range = 0;
  double body = 0;
  double lower_tail = 0;
  double upper_tail = 0;
};

/// min / max / mean of the window's closes.
inline WindowStats window_stats(const Window& w) {
  auto closes = w.closes();
  if (closes.empty()) throw EmptyInputError("window_stats on empty window");
  auto [lo, hi] = std::minmax_element(closes.begin(), closes.end());
  double sum = std::accumulate(closes.begin(), closes.end(), 0.0);
  return {*lo, *hi, sum / static_cast<double>(closes.size())};
}

struct LineFit {
  double slope = 0;
  double intercept = 0;
};

/// Ordinary least squares of values[k] on k = 0..n-1.
inline LineFit least_squares(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw DomainError("least squares needs at least 2 points, got " + std::to_string(n));
  const double xm = static_cast<double>(n - 1) / 2.0;
  const double ym = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = static_cast<double>(k) - xm;
    sxy += dx * (values[k] - ym);
    sxx += dx * dx;
  }
  const double slope = sxy / sxx;
  return {slope, ym - slope * xm};
}

namespace detail {

// Regression slope through `values`, intercept shifted so the line bounds every point
// (from below for support, from above for resistance) and touches the extreme one.
inline TrendLine envelope(std::span<const double> values, LineKind kind) {
  LineFit fit = least_squares(values);
  double shift = kind == LineKind::Support ? std::numeric_limits<double>::infinity()
                                           : -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double residual = values[k] - fit.slope * static_cast<double>(k);
    shift = kind == LineKind::Support ? std::min(shift, residual) : std::max(shift, residual);
  }
  return {fit.slope, shift, kind};
}

}  // namespace detail

inline TrendLine fit_support_line(const Window& w) {
  if (w.size() < 2) throw DomainError("support line needs a window of at least 2 candles");
  std::vector<double> lows;
  lows.reserve(w.size());
  for (const auto& c : w.candles()) lows.push_back(c.low);
  return detail::envelope(lows, LineKind::Support);
}

inline TrendLine fit_resistance_line(const Window& w) {
  if (w.size() < 2) throw DomainError("resistance line needs a window of at least 2 candles");
  std::vector<double> highs;
  highs.reserve(w.size());
  for (const auto& c : w.candles()) highs.push_back(c.high);
  return detail::envelope(highs, LineKind::Resistance);
}

inline std::vector<double> sample_line(const TrendLine& line, std::size_t steps) {
  if (steps == 0) throw DomainError("sample_line needs at least one step");
  std::vector<double> out(steps);
  for (std::size_t k = 0; k < steps; ++k) out[k] = line.at(static_cast<double>(k));
  return out;
}

/// Fraction of `values` that are <= x. Ties count toward the rank.
inline double percentile_rank(std::span<const double> values, double x) {
  if (values.empty()) throw EmptyInputError("percentile_rank over empty list");
  auto count = std::count_if(values.begin(), values.end(), [x](double v) { return v <= x; });
  return static_cast<double>(count) / static_cast<double>(values.size());
}

/// Slack applied when comparing ratios of counts against fractional cut-offs.
inline constexpr double kRankSlack = 1e-12;

/// "x is in the top `top_fraction` of values" <=> rank >= 1 - top_fraction.
inline bool in_top_fraction(std::span<const double> values, double x, double top_fraction) {
  return percentile_rank(values, x) >= (1.0 - top_fraction) - kRankSlack;
}

inline CandleGeometry candle_geometry(const Candle& c) {
  const double body_lo = std::min(c.open, c.close);
  const double body_hi = std::max(c.open, c.close);
  return {c.high - c.low, body_hi - body_lo, body_lo - c.low, c.high - body_hi};
}

/// Sample standard deviation of one-step simple close-to-close returns.
inline double realized_volatility(const Window& w) {
  if (w.size() < 2) throw DomainError("realized volatility needs a window of at least 2 candles");
  std::vector<double> returns;
  returns.reserve(w.size() - 1);
  for (std::size_t i = 1; i < w.size(); ++i) returns.push_back((w[i].close - w[i - 1].close) / w[i - 1].close);
  if (returns.size() < 2) return 0.0;
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
  double ss = 0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  return std::sqrt(ss / static_cast<double>(returns.size() - 1));
}

}  // namespace metagate
