#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metagate/errors.hpp"
#include "metagate/indicators.hpp"
#include "metagate/market_data.hpp"
#include "metagate/numfmt.hpp"

namespace metagate {

enum class PredicateKind {
  LowestInWindow,    // candle low is the minimum low of the lookback
  SizeTopPct,        // range in the top `threshold` of lookback ranges
  VolumeTopPct,      // volume in the top `threshold` of lookback volumes
  TailMinFraction,   // lower tail >= threshold * range
  BodyUpperHalf,     // min(open, close) - low >= threshold * range
  CloseTopFraction,  // close >= high - threshold * range
};

inline std::string_view to_string(PredicateKind k) {
  switch (k) {
    case PredicateKind::LowestInWindow: return "lowest_in_window";
    case PredicateKind::SizeTopPct: return "size_top_pct";
    case PredicateKind::VolumeTopPct: return "volume_top_pct";
    case PredicateKind::TailMinFraction: return "tail_min_fraction";
    case PredicateKind::BodyUpperHalf: return "body_upper_half";
    case PredicateKind::CloseTopFraction: return "close_top_fraction";
  }
  return "unknown";
}

/// True for predicates that only look at the shape of the candle under test.
inline bool is_geometric(PredicateKind k) {
  return k == PredicateKind::TailMinFraction || k == PredicateKind::BodyUpperHalf ||
         k == PredicateKind::CloseTopFraction;
}

struct Predicate {
  std::string name;
  PredicateKind kind = PredicateKind::LowestInWindow;
  double threshold = 1.0;    // fraction in (0, 1]
  std::size_t lookback = 1;  // candles, including the one under test
};

/// Conjunction of predicates. Construct through make_rule() to get invariant checks.
struct Rule {
  std::string name;
  std::vector<Predicate> predicates;

  std::size_t max_lookback() const {
    std::size_t m = 0;
    for (const auto& p : predicates) m = std::max(m, p.lookback);
    return m;
  }
};

inline Rule make_rule(std::string name, std::vector<Predicate> predicates) {
  if (predicates.empty()) throw DomainError("rule '" + name + "' has no predicates");
  std::set<std::string> seen;
  for (const auto& p : predicates) {
    if (!(p.threshold > 0.0 && p.threshold <= 1.0))
      throw DomainError("predicate '" + p.name + "' threshold must lie in (0, 1]");
    if (p.lookback < 1) throw DomainError("predicate '" + p.name + "' lookback must be >= 1");
    if (!seen.insert(p.name).second) throw DomainError("duplicate predicate name '" + p.name + "' in rule " + name);
  }
  return Rule{std::move(name), std::move(predicates)};
}

struct TraceEntry {
  std::string predicate;
  double measured = 0;
  double threshold = 0;  // effective cut the measured value was compared against
  bool passed = false;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct RuleVerdict {
  std::string rule;
  bool passed = false;
  std::vector<TraceEntry> trace;

  /// First failing trace entry, or nullptr when the rule passed.
  const TraceEntry* first_failure() const {
    for (const auto& t : trace)
      if (!t.passed) return &t;
    return nullptr;
  }

  friend bool operator==(const RuleVerdict&, const RuleVerdict&) = default;
};

/// The bottoming-tail reversal candle over a 90-session lookback.
inline Rule bottoming_tail_rule() {
  constexpr std::size_t kLookback = 90;
  return make_rule("bottoming_tail_candle",
                   {
                       {"lowest_candle_in_last_90_days", PredicateKind::LowestInWindow, 1.0, kLookback},
                       {"candle_size_in_top_70%_of_last_90_candles", PredicateKind::SizeTopPct, 0.70, kLookback},
                       {"candle_volume_in_top_10%_of_last_90_candles", PredicateKind::VolumeTopPct, 0.10, kLookback},
                       {"tail_at_least_50%_of_entire_candle", PredicateKind::TailMinFraction, 0.50, kLookback},
                       {"body_in_upper_50%_of_entire_candle", PredicateKind::BodyUpperHalf, 0.50, kLookback},
                       {"closing_price_in_top_25%_of_entire_candle", PredicateKind::CloseTopFraction, 0.25, kLookback},
                   });
}

namespace detail {

inline TraceEntry measure(const Predicate& p, const Window& w) {
  const Window scope = w.tail(p.lookback);
  const Candle& c = scope.last();
  TraceEntry e{p.name, 0.0, 0.0, false};

  auto column = [&scope](auto getter) {
    std::vector<double> v;
    v.reserve(scope.size());
    for (const auto& k : scope.candles()) v.push_back(getter(k));
    return v;
  };

  switch (p.kind) {
    case PredicateKind::LowestInWindow: {
      auto lows = column([](const Candle& k) { return k.low; });
      auto at_or_above = std::count_if(lows.begin(), lows.end(), [&](double v) { return v >= c.low; });
      e.measured = static_cast<double>(at_or_above) / static_cast<double>(lows.size());
      e.threshold = p.threshold;
      e.passed = e.measured >= e.threshold - kRankSlack;
      break;
    }
    case PredicateKind::SizeTopPct: {
      auto ranges = column([](const Candle& k) { return k.high - k.low; });
      e.measured = percentile_rank(ranges, c.high - c.low);
      e.threshold = 1.0 - p.threshold;
      e.passed = e.measured >= e.threshold - kRankSlack;
      break;
    }
    case PredicateKind::VolumeTopPct: {
      auto volumes = column([](const Candle& k) { return k.volume; });
      e.measured = percentile_rank(volumes, c.volume);
      e.threshold = 1.0 - p.threshold;
      e.passed = e.measured >= e.threshold - kRankSlack;
      break;
    }
    case PredicateKind::TailMinFraction:
    case PredicateKind::BodyUpperHalf:
    case PredicateKind::CloseTopFraction: {
      const CandleGeometry g = candle_geometry(c);
      // Position of the measured level above the low; compared without dividing by the range.
      double span = 0;
      double cut = 0;
      if (p.kind == PredicateKind::TailMinFraction) {
        span = g.lower_tail;
        cut = p.threshold;
      } else if (p.kind == PredicateKind::BodyUpperHalf) {
        span = std::min(c.open, c.close) - c.low;
        cut = p.threshold;
      } else {
        span = c.close - c.low;
        cut = 1.0 - p.threshold;
      }
      e.threshold = cut;
      // Zero-range candles fail every geometric predicate.
      if (g.range > 0) {
        e.measured = span / g.range;
        e.passed = p.kind == PredicateKind::CloseTopFraction ? c.close >= c.high - p.threshold * g.range
                                                              : span >= cut * g.range;
      }
      break;
    }
  }
  return e;
}

}  // namespace detail

/// Evaluates every predicate (no short-circuit) against the window's last candle.
inline RuleVerdict evaluate_rule(const Rule& rule, const Window& w) {
  if (w.size() < rule.max_lookback())
    throw InsufficientHistoryError("rule " + rule.name + " needs " + std::to_string(rule.max_lookback()) +
                                   " candles of history, window has " + std::to_string(w.size()));
  RuleVerdict v{rule.name, true, {}};
  v.trace.reserve(rule.predicates.size());
  for (const auto& p : rule.predicates) {
    v.trace.push_back(detail::measure(p, w));
    v.passed = v.passed && v.trace.back().passed;
  }
  return v;
}

inline std::string format_measure(double v) { return numfmt::trimmed(v, 4); }

inline std::string explain_entry(const TraceEntry& t) {
  return std::string(t.passed ? "PASS " : "FAIL ") + t.predicate + ": measured " + format_measure(t.measured) +
         " vs threshold " + format_measure(t.threshold);
}

inline std::vector<std::string> explain(const RuleVerdict& verdict) {
  std::vector<std::string> lines;
  lines.reserve(verdict.trace.size() + 1);
  for (const auto& t : verdict.trace) lines.push_back(explain_entry(t));
  lines.push_back(verdict.rule + ": " + (verdict.passed ? "PASS" : "FAIL"));
  return lines;
}

inline nlohmann::ordered_json to_json(const RuleVerdict& v) {
  nlohmann::ordered_json trace = nlohmann::ordered_json::array();
  for (const auto& t : v.trace) {
    nlohmann::ordered_json e;
    e["predicate"] = t.predicate;
    e["measured"] = t.measured;
    e["threshold"] = t.threshold;
    e["passed"] = t.passed;
    trace.push_back(std::move(e));
  }
  nlohmann::ordered_json j;
  j["rule"] = v.rule;
  j["passed"] = v.passed;
  j["trace"] = std::move(trace);
  return j;
}

inline RuleVerdict verdict_from_json(const nlohmann::ordered_json& j) {
  RuleVerdict v;
  v.rule = j.at("rule").get<std::string>();
  v.passed = j.at("passed").get<bool>();
  for (const auto& e : j.at("trace"))
    v.trace.push_back({e.at("predicate").get<std::string>(), e.at("measured").get<double>(),
                       e.at("threshold").get<double>(), e.at("passed").get<bool>()});
  return v;
}

/// Built-in rules addressable by name from configuration.
inline Rule rule_by_name(std::string_view name) {
  if (name == "bottoming_tail_candle" || name == "bottoming_tail") return bottoming_tail_rule();
  throw DomainError("unknown rule '" + std::string(name) + "'");
}

}  // namespace metagate
