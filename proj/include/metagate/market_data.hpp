#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <sstream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "metagate/errors.hpp"
#include "metagate/numfmt.hpp"

namespace metagate {

/// How timestamps appeared in the source file; serialization writes them back the same way.
enum class TimestampFormat { EpochSeconds, IsoDate };

struct Candle {
  std::int64_t timestamp = 0;  // epoch seconds
  double open = 0;
  double high = 0;
  double low = 0;
  double close = 0;
  double volume = 0;

  friend bool operator==(const Candle&, const Candle&) = default;
};

class Series {
 public:
  Series() = default;
  Series(std::string symbol, std::vector<Candle> candles,
         TimestampFormat format = TimestampFormat::EpochSeconds)
      : symbol_(std::move(symbol)), candles_(std::move(candles)), format_(format) {}

  const std::string& symbol() const noexcept { return symbol_; }
  std::span<const Candle> candles() const noexcept { return candles_; }
  std::size_t size() const noexcept { return candles_.size(); }
  bool empty() const noexcept { return candles_.empty(); }
  const Candle& operator[](std::size_t i) const { return candles_[i]; }
  const Candle& at(std::size_t i) const {
    if (i >= candles_.size())
      throw DomainError("candle index " + std::to_string(i) + " out of range (series length " +
                        std::to_string(candles_.size()) + ")");
    return candles_[i];
  }
  TimestampFormat timestamp_format() const noexcept { return format_; }

  friend bool operator==(const Series&, const Series&) = default;

 private:
  std::string symbol_;
  std::vector<Candle> candles_;
  TimestampFormat format_ = TimestampFormat::EpochSeconds;
};

/// Half-open view [start, end) into a Series. The Series must outlive the Window.
class Window {
 public:
  Window(const Series& source, std::size_t start, std::size_t end) : source_(&source), start_(start), end_(end) {
    if (start >= end || end > source.size())
      throw DomainError("invalid window [" + std::to_string(start) + ", " + std::to_string(end) +
                        ") over series of length " + std::to_string(source.size()));
  }

  /// The `length` candles ending at (and including) `last_index`.
  static Window trailing(const Series& source, std::size_t last_index, std::size_t length) {
    if (length == 0) throw DomainError("window length must be positive");
    if (last_index >= source.size())
      throw DomainError("window end " + std::to_string(last_index) + " out of range");
    if (last_index + 1 < length)
      throw InsufficientHistoryError("need " + std::to_string(length) + " candles ending at index " +
                                     std::to_string(last_index) + ", have " + std::to_string(last_index + 1));
    return Window(source, last_index + 1 - length, last_index + 1);
  }

  static Window whole(const Series& source) {
    if (source.empty()) throw EmptyInputError("empty series");
    return Window(source, 0, source.size());
  }

  const Series& source() const noexcept { return *source_; }
  std::size_t start_index() const noexcept { return start_; }
  std::size_t end_index() const noexcept { return end_; }
  std::size_t size() const noexcept { return end_ - start_; }
  std::span<const Candle> candles() const noexcept { return source_->candles().subspan(start_, size()); }
  const Candle& operator[](std::size_t i) const { return (*source_)[start_ + i]; }
  const Candle& last() const { return (*source_)[end_ - 1]; }
  std::size_t last_index() const noexcept { return end_ - 1; }

  /// The trailing `length` candles of this window.
  Window tail(std::size_t length) const {
    if (length > size())
      throw InsufficientHistoryError("window of " + std::to_string(size()) + " candles is shorter than lookback " +
                                     std::to_string(length));
    return Window(*source_, end_ - length, end_);
  }

  std::vector<double> closes() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& c : candles()) out.push_back(c.close);
    return out;
  }

 private:
  const Series* source_;
  std::size_t start_;
  std::size_t end_;
};

namespace detail {

inline bool parse_iso_date(std::string_view s, std::int64_t& epoch) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  long long y = 0, m = 0, d = 0;
  if (!numfmt::parse_int(s.substr(0, 4), y) || !numfmt::parse_int(s.substr(5, 2), m) ||
      !numfmt::parse_int(s.substr(8, 2), d))
    return false;
  using namespace std::chrono;
  year_month_day ymd{year{static_cast<int>(y)}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return false;
  epoch = sys_days{ymd}.time_since_epoch().count() * 86400LL;
  return true;
}

inline bool is_integer_text(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (s[i] < '0' || s[i] > '9') return false;
  return true;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

/// Reads all lines, stripping a trailing CR from each (LF and CRLF input both accepted).
inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace detail

inline std::string format_timestamp(std::int64_t epoch, TimestampFormat format) {
  if (format == TimestampFormat::EpochSeconds) return std::to_string(epoch);
  using namespace std::chrono;
  std::int64_t days = epoch >= 0 ? epoch / 86400 : -((-epoch + 86399) / 86400);
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

/// Parses one timestamp field, fixing the series format on first use. Returns false on bad text.
inline bool parse_timestamp(std::string_view text, std::int64_t& out, TimestampFormat& format) {
  if (detail::is_integer_text(text)) {
    long long v = 0;
    if (!numfmt::parse_int(text, v)) return false;
    out = v;
    format = TimestampFormat::EpochSeconds;
    return true;
  }
  if (detail::parse_iso_date(text, out)) {
    format = TimestampFormat::IsoDate;
    return true;
  }
  return false;
}

/// Returns the name of the first violated candle invariant, or an empty string.
inline std::string candle_violation(const Candle& c) {
  for (double p : {c.open, c.high, c.low, c.close})
    if (!std::isfinite(p) || p <= 0) return "prices > 0";
  if (!std::isfinite(c.volume) || c.volume < 0) return "volume >= 0";
  if (c.low > c.high) return "low <= high";
  if (c.low > std::min(c.open, c.close)) return "low <= min(open, close)";
  if (c.high < std::max(c.open, c.close)) return "high >= max(open, close)";
  return {};
}

inline constexpr std::string_view kCsvHeader = "timestamp,open,high,low,close,volume";

/// Header-first OHLCV CSV. Per-row candle invariants are checked here (errors name the CSV row,
/// header = row 1); ordering is left to validate().
inline Series parse_csv(std::istream& in, std::string symbol) {
  auto lines = detail::read_lines(in);
  if (lines.empty()) throw EmptyInputError("empty input: no header and no data rows");
  if (lines[0] != kCsvHeader)
    throw ParseError(1, "expected header '" + std::string(kCsvHeader) + "', got '" + lines[0] + "'");
  if (lines.size() == 1) throw EmptyInputError("empty input: header present but no data rows");

  std::vector<Candle> candles;
  candles.reserve(lines.size() - 1);
  TimestampFormat series_format = TimestampFormat::EpochSeconds;
  static constexpr const char* kFieldNames[] = {"timestamp", "open", "high", "low", "close", "volume"};
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row = li + 1;
    auto fields = detail::split_commas(lines[li]);
    if (fields.size() != 6)
      throw ParseError(row, "expected 6 fields, got " + std::to_string(fields.size()));
    Candle c;
    TimestampFormat fmt{};
    if (!parse_timestamp(fields[0], c.timestamp, fmt))
      throw ParseError(row, "bad timestamp '" + std::string(fields[0]) + "'");
    if (li == 1)
      series_format = fmt;
    else if (fmt != series_format)
      throw ParseError(row, "timestamp format differs from earlier rows");
    double* targets[] = {&c.open, &c.high, &c.low, &c.close, &c.volume};
    for (std::size_t f = 1; f < 6; ++f) {
      if (!numfmt::parse_double(fields[f], *targets[f - 1]))
        throw ParseError(row, std::string("non-numeric ") + kFieldNames[f] + " '" + std::string(fields[f]) + "'");
    }
    if (auto v = candle_violation(c); !v.empty())
      throw ValidationError(candles.size(), v, "row " + std::to_string(row));
    candles.push_back(c);
  }
  return Series(std::move(symbol), std::move(candles), series_format);
}

inline Series parse_csv(std::string_view text, std::string symbol) {
  std::istringstream in{std::string(text)};
  return parse_csv(in, std::move(symbol));
}

/// Returns the series unchanged when every invariant holds; otherwise throws with the first
/// violating candle index.
inline const Series& validate(const Series& series) {
  if (series.empty()) throw EmptyInputError("series '" + series.symbol() + "' has no candles");
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (auto v = candle_violation(series[i]); !v.empty())
      throw ValidationError(i, v, "candle " + std::to_string(i));
    if (i > 0 && series[i].timestamp <= series[i - 1].timestamp)
      throw ValidationError(i, "timestamps strictly increasing", "candle " + std::to_string(i));
  }
  return series;
}

inline std::string to_csv(const Series& series) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& c : series.candles()) {
    out += format_timestamp(c.timestamp, series.timestamp_format());
    for (double v : {c.open, c.high, c.low, c.close, c.volume}) {
      out += ',';
      out += numfmt::shortest(v);
    }
    out += '\n';
  }
  return out;
}

/// Simple return (close[j] - close[i]) / close[i] for i < j.
inline double pct_return(const Series& series, std::size_t i, std::size_t j) {
  if (i >= series.size() || j >= series.size())
    throw DomainError("pct_return index out of range (" + std::to_string(i) + ", " + std::to_string(j) +
                      ") for series of length " + std::to_string(series.size()));
  if (i >= j) throw DomainError("pct_return requires i < j");
  return (series[j].close - series[i].close) / series[i].close;
}

}  // namespace metagate
