#pragma once

#include <string>
#include <vector>

#include "metagate/errors.hpp"
#include "metagate/indicators.hpp"
#include "metagate/market_data.hpp"
#include "metagate/numfmt.hpp"

namespace metagate {

struct PromptConfig {
  std::string asset = "Bitcoin";
  std::string domain;  // free text for the [Domain] section
  std::size_t lookback = 110;
  std::size_t horizon = 7;
  std::size_t line_samples = 6;
  int stats_decimals = 1;
  int line_decimals = 2;
};

/// "[a b c]" with each value rounded and trailing zeros trimmed.
inline std::string bracketed_sequence(const std::vector<double>& values, int decimals) {
  std::string out = "[";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ' ';
    out += numfmt::trimmed(values[i], decimals);
  }
  out += ']';
  return out;
}

/// Prompt-as-Prefix text: dataset line, [Domain], [Instructions], [Statistics], reversion note,
/// then the numbered support and resistance blocks. Sections always appear in this order.
inline std::string build_prompt(const Window& w, const TrendLine& support, const TrendLine& resistance,
                                const PromptConfig& cfg) {
  if (cfg.lookback < 1 || cfg.horizon < 1 || cfg.line_samples < 1)
    throw DomainError("prompt lookback, horizon and line sample count must all be >= 1");
  if (support.kind != LineKind::Support || resistance.kind != LineKind::Resistance)
    throw DomainError("build_prompt expects a support line and a resistance line");
  const WindowStats stats = window_stats(w);
  const auto fmt_stat = [&](double v) { return numfmt::trimmed(v, cfg.stats_decimals); };

  std::string p;
  p += "This dataset is the " + cfg.asset + " daily price chart.\n";
  p += "Below is the information about the input time series:\n\n";
  p += "[Domain]: " + cfg.domain + "\n";
  p += "[Instructions]: Predict the data for the next " + std::to_string(cfg.horizon) + " steps given the previous " +
       std::to_string(cfg.lookback) + " steps.\n\n";
  p += "[Statistics]: The input has a minimum value of " + fmt_stat(stats.min) + " and a maximum value of " +
       fmt_stat(stats.max) + ", with an average value of " + fmt_stat(stats.mean) + ".\n";
  p += "Your predictions should take into account the behaviour that " + cfg.asset +
       " prices tend to revert when approaching these support and resistance levels.\n\n";
  p += "1. Support Line: This sequence represents the lower boundary of the " + cfg.asset +
       " price range over the considered period. Here is the support line : " +
       bracketed_sequence(sample_line(support, cfg.line_samples), cfg.line_decimals) +
       ". It is by definition a line.\n\n";
  p += "2. Resistance Line: This sequence represents the upper boundary of the " + cfg.asset +
       " price range over the considered period. Here is the resistance line : " +
       bracketed_sequence(sample_line(resistance, cfg.line_samples), cfg.line_decimals) +
       ". It is by definition a line.\n";
  return p;
}

/// Fits both lines on `w` and builds the prompt.
inline std::string build_prompt(const Window& w, const PromptConfig& cfg) {
  return build_prompt(w, fit_support_line(w), fit_resistance_line(w), cfg);
}

}  // namespace metagate
