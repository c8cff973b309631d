#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "metagate/errors.hpp"
#include "metagate/indicators.hpp"
#include "metagate/market_data.hpp"
#include "metagate/numfmt.hpp"

namespace metagate {

enum class Side { Up, Down };

inline std::string_view to_string(Side s) { return s == Side::Up ? "Up" : "Down"; }

inline Side opposite(Side s) { return s == Side::Up ? Side::Down : Side::Up; }

/// Up only on a strict rise; a flat move counts as Down.
inline Side side_of_move(double from, double to) { return to > from ? Side::Up : Side::Down; }

struct Interval {
  std::vector<double> lower;
  std::vector<double> upper;

  friend bool operator==(const Interval&, const Interval&) = default;
};

struct Forecast {
  std::size_t horizon = 0;
  std::vector<double> path;  // path[k] is the prediction for origin + k + 1
  std::optional<Interval> interval;
  std::size_t origin_index = 0;  // last observed candle

  friend bool operator==(const Forecast&, const Forecast&) = default;
};

/// Central coverage of the +/- one standard deviation band; the default interval.
inline constexpr double kOneSigmaCoverage = 0.6826894921370859;

/// Inverse standard normal CDF. Rational approximation refined by one Halley step.
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x = 0;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// z such that [-z, z] holds `coverage` of a standard normal.
inline double coverage_z(double coverage) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw DomainError("interval coverage must lie in (0, 1)");
  return normal_quantile(0.5 + coverage / 2.0);
}

struct ForecastConfig {
  std::size_t horizon = 7;
  double coverage = kOneSigmaCoverage;
  bool with_interval = true;
};

namespace detail {

// path +/- z * sigma * sqrt(step), step counted from 1.
inline Interval widening_interval(const std::vector<double>& path, double sigma, double z) {
  Interval iv;
  iv.lower.resize(path.size());
  iv.upper.resize(path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double half = z * sigma * std::sqrt(static_cast<double>(k + 1));
    iv.lower[k] = path[k] - half;
    iv.upper[k] = path[k] + half;
  }
  return iv;
}

inline void require_horizon(std::size_t horizon) {
  if (horizon == 0) throw DomainError("forecast horizon must be positive");
}

// price-unit one-step volatility; zero for windows too short to measure
inline double price_sigma(const Window& w) { return w.size() >= 2 ? realized_volatility(w) * w.last().close : 0.0; }

}  // namespace detail

/// Last close carried forward.
inline Forecast naive_forecast(const Window& w, const ForecastConfig& cfg = {}) {
  detail::require_horizon(cfg.horizon);
  Forecast f;
  f.horizon = cfg.horizon;
  f.origin_index = w.last_index();
  f.path.assign(cfg.horizon, w.last().close);
  if (cfg.with_interval) f.interval = detail::widening_interval(f.path, detail::price_sigma(w), coverage_z(cfg.coverage));
  return f;
}

/// Last close plus the window's mean one-step change per step.
inline Forecast drift_forecast(const Window& w, const ForecastConfig& cfg = {}) {
  detail::require_horizon(cfg.horizon);
  if (w.size() < 2) throw DomainError("drift forecast needs a window of at least 2 candles");
  const double step = (w.last().close - w[0].close) / static_cast<double>(w.size() - 1);
  Forecast f;
  f.horizon = cfg.horizon;
  f.origin_index = w.last_index();
  f.path.resize(cfg.horizon);
  for (std::size_t k = 0; k < cfg.horizon; ++k) f.path[k] = w.last().close + static_cast<double>(k + 1) * step;
  if (cfg.with_interval) f.interval = detail::widening_interval(f.path, detail::price_sigma(w), coverage_z(cfg.coverage));
  return f;
}

/// Least-squares trend of closes on the window index, extrapolated; flat residual band.
inline Forecast linreg_forecast(const Window& w, const ForecastConfig& cfg = {}) {
  detail::require_horizon(cfg.horizon);
  if (w.size() < 2) throw DomainError("linreg forecast needs a window of at least 2 candles");
  const auto closes = w.closes();
  const LineFit fit = least_squares(closes);
  const std::size_t n = closes.size();
  Forecast f;
  f.horizon = cfg.horizon;
  f.origin_index = w.last_index();
  f.path.resize(cfg.horizon);
  for (std::size_t k = 0; k < cfg.horizon; ++k) f.path[k] = fit.intercept + fit.slope * static_cast<double>(n + k);
  if (cfg.with_interval) {
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = closes[i] - (fit.intercept + fit.slope * static_cast<double>(i));
      ssr += r * r;
    }
    const double resid_sd = n > 2 ? std::sqrt(ssr / static_cast<double>(n - 2)) : 0.0;
    const double half = coverage_z(cfg.coverage) * resid_sd;
    Interval iv;
    for (double p : f.path) {
      iv.lower.push_back(p - half);
      iv.upper.push_back(p + half);
    }
    f.interval = std::move(iv);
  }
  return f;
}

/// Judged at the horizon endpoint; ties map to Down.
inline Side direction_of(const Forecast& f, double last_close) {
  if (f.path.empty()) throw DomainError("direction_of on empty forecast path");
  return side_of_move(last_close, f.path.back());
}

// ---------------------------------------------------------------------------
// External (imported) forecasts

inline constexpr std::string_view kExternalHeaderFull = "origin_timestamp,step,predicted_close,lower,upper";
inline constexpr std::string_view kExternalHeaderPath = "origin_timestamp,step,predicted_close";

struct ExternalForecast {
  std::int64_t origin_timestamp = 0;
  Forecast forecast;

  friend bool operator==(const ExternalForecast&, const ExternalForecast&) = default;
};

/// Groups rows by origin; each origin's rows must be contiguous and its steps run 1, 2, ... in order.
/// Origins are joined to `series` by exact timestamp.
inline std::vector<ExternalForecast> load_external_forecasts(std::istream& in, const Series& series) {
  auto lines = detail::read_lines(in);
  if (lines.empty()) throw EmptyInputError("external forecast file is empty");
  bool with_interval = false;
  if (lines[0] == kExternalHeaderFull)
    with_interval = true;
  else if (lines[0] != kExternalHeaderPath)
    throw ParseError(1, "expected header '" + std::string(kExternalHeaderFull) + "' (last two columns optional)");

  std::unordered_map<std::int64_t, std::size_t> index_of;
  for (std::size_t i = 0; i < series.size(); ++i) index_of.emplace(series[i].timestamp, i);

  std::vector<ExternalForecast> out;
  std::map<std::int64_t, bool> closed;  // origins whose group already ended
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li + 1;
    auto fields = detail::split_commas(lines[li]);
    const std::size_t arity = with_interval ? 5 : 3;
    if (fields.size() != arity)
      throw ParseError(row, "expected " + std::to_string(arity) + " fields, got " + std::to_string(fields.size()));
    std::int64_t ts = 0;
    TimestampFormat fmt{};
    if (!parse_timestamp(fields[0], ts, fmt)) throw ParseError(row, "bad origin_timestamp '" + std::string(fields[0]) + "'");
    long long step = 0;
    if (!numfmt::parse_int(fields[1], step) || step < 1) throw ParseError(row, "bad step '" + std::string(fields[1]) + "'");
    double pred = 0, lo = 0, hi = 0;
    if (!numfmt::parse_double(fields[2], pred)) throw ParseError(row, "non-numeric predicted_close");
    if (with_interval && (!numfmt::parse_double(fields[3], lo) || !numfmt::parse_double(fields[4], hi)))
      throw ParseError(row, "non-numeric lower/upper");

    const std::string origin_text = format_timestamp(ts, series.timestamp_format());
    if (out.empty() || out.back().origin_timestamp != ts) {
      if (closed.count(ts))
        throw ParseError(row, "rows for origin " + origin_text + " are not contiguous");
      if (!out.empty()) closed[out.back().origin_timestamp] = true;
      auto it = index_of.find(ts);
      if (it == index_of.end()) throw ParseError(row, "origin " + origin_text + " is not a timestamp of the series");
      ExternalForecast ef;
      ef.origin_timestamp = ts;
      ef.forecast.origin_index = it->second;
      if (with_interval) ef.forecast.interval = Interval{};
      out.push_back(std::move(ef));
    }
    Forecast& f = out.back().forecast;
    if (static_cast<std::size_t>(step) != f.path.size() + 1)
      throw ParseError(row, "origin " + origin_text + ": expected step " + std::to_string(f.path.size() + 1) + ", got " +
                                std::to_string(step));
    f.path.push_back(pred);
    if (with_interval) {
      if (!(lo <= pred && pred <= hi)) throw ParseError(row, "lower <= predicted_close <= upper violated");
      f.interval->lower.push_back(lo);
      f.interval->upper.push_back(hi);
    }
    f.horizon = f.path.size();
  }
  return out;
}

inline std::vector<ExternalForecast> load_external_forecasts(std::string_view text, const Series& series) {
  std::istringstream in{std::string(text)};
  return load_external_forecasts(in, series);
}

/// Writes forecasts in the import format. The interval columns are emitted when every forecast has one.
inline std::string to_external_csv(const std::vector<ExternalForecast>& forecasts, TimestampFormat format) {
  const bool with_interval =
      !forecasts.empty() &&
      std::all_of(forecasts.begin(), forecasts.end(), [](const auto& f) { return f.forecast.interval.has_value(); });
  std::string out(with_interval ? kExternalHeaderFull : kExternalHeaderPath);
  out += '\n';
  for (const auto& ef : forecasts) {
    const std::string ts = format_timestamp(ef.origin_timestamp, format);
    for (std::size_t k = 0; k < ef.forecast.path.size(); ++k) {
      out += ts + ',' + std::to_string(k + 1) + ',' + numfmt::shortest(ef.forecast.path[k]);
      if (with_interval)
        out += ',' + numfmt::shortest(ef.forecast.interval->lower[k]) + ',' +
               numfmt::shortest(ef.forecast.interval->upper[k]);
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forecaster selection

/// Produces a forecast at the window's last candle, or nothing when no forecast exists for that origin.
using Forecaster = std::function<std::optional<Forecast>(const Window&, const ForecastConfig&)>;

inline Forecaster make_baseline(std::string_view name) {
  if (name == "naive") return [](const Window& w, const ForecastConfig& c) { return std::optional(naive_forecast(w, c)); };
  if (name == "drift") return [](const Window& w, const ForecastConfig& c) { return std::optional(drift_forecast(w, c)); };
  if (name == "linreg")
    return [](const Window& w, const ForecastConfig& c) { return std::optional(linreg_forecast(w, c)); };
  throw DomainError("unknown forecaster '" + std::string(name) + "' (expected naive, drift, linreg or external:<path>)");
}

/// Looks imported forecasts up by origin index. A horizon mismatch is an error.
inline Forecaster make_external(std::vector<ExternalForecast> forecasts) {
  auto by_origin = std::make_shared<std::unordered_map<std::size_t, Forecast>>();
  for (auto& ef : forecasts) by_origin->emplace(ef.forecast.origin_index, std::move(ef.forecast));
  return [by_origin](const Window& w, const ForecastConfig& c) -> std::optional<Forecast> {
    auto it = by_origin->find(w.last_index());
    if (it == by_origin->end()) return std::nullopt;
    if (it->second.horizon != c.horizon)
      throw DomainError("imported forecast at origin index " + std::to_string(w.last_index()) + " has horizon " +
                        std::to_string(it->second.horizon) + ", expected " + std::to_string(c.horizon));
    return it->second;
  };
}

}  // namespace metagate
