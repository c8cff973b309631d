#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "metagate/errors.hpp"
#include "metagate/forecaster.hpp"
#include "metagate/market_data.hpp"
#include "metagate/numfmt.hpp"
#include "metagate/reliability_gate.hpp"
#include "metagate/rule_engine.hpp"

namespace metagate {

struct EvalRecord {
  std::size_t origin_index = 0;
  std::int64_t origin_timestamp = 0;
  Side predicted = Side::Down;
  Side realized = Side::Down;
  GateDecision decision;
  Forecast forecast;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct WalkForwardConfig {
  std::size_t lookback = 110;
  std::size_t horizon = 7;
  std::size_t stride = 1;
  double train_fraction = 0.7;
  double coverage = kOneSigmaCoverage;
  double threshold = 0.5;
  TrainConfig train;
  std::vector<std::string> required_rules;
};

/// Everything the gate sees at one origin.
struct OriginSample {
  Forecast forecast;
  std::vector<RuleVerdict> verdicts;
  FeatureVector features;
};

/// Where the eligible origins fall and how they are split.
struct WalkForwardPlan {
  std::size_t first_origin = 0;     // earliest origin with enough history
  std::size_t eligible = 0;         // origins [first, first + eligible) have a full horizon ahead
  std::size_t train_count = 0;      // leading eligible origins used to train the gate
  std::size_t eval_begin = 0;       // offset into the eligible origins where evaluation starts

  std::size_t origin(std::size_t offset) const { return first_origin + offset; }
};

struct WalkForwardResult {
  std::vector<EvalRecord> records;
  GateModel gate;
  std::size_t training_examples = 0;
};

inline std::size_t required_history(const WalkForwardConfig& cfg, std::span<const Rule> rules) {
  std::size_t h = std::max<std::size_t>(cfg.lookback, 2);
  for (const auto& r : rules) h = std::max(h, r.max_lookback());
  return h;
}

/// Origin bookkeeping: the first 'train_fraction' of eligible origins train the gate and the next
/// `horizon` origins are embargoed, so no training label overlaps the evaluation segment.
inline WalkForwardPlan plan_walk_forward(std::size_t series_length, const WalkForwardConfig& cfg,
                                         std::span<const Rule> rules) {
  if (cfg.horizon == 0) throw DomainError("horizon must be positive");
  if (cfg.stride == 0) throw DomainError("stride must be positive");
  if (!(cfg.train_fraction >= 0.0 && cfg.train_fraction < 1.0))
    throw DomainError("train fraction must lie in [0, 1)");
  const std::size_t history = required_history(cfg, rules);
  if (series_length < history + cfg.horizon)
    throw InsufficientHistoryError("series of " + std::to_string(series_length) + " candles is too short: need " +
                                   std::to_string(history) + " candles of history plus a horizon of " +
                                   std::to_string(cfg.horizon));
  WalkForwardPlan plan;
  plan.first_origin = history - 1;
  plan.eligible = series_length - cfg.horizon - plan.first_origin;
  plan.train_count = static_cast<std::size_t>(std::floor(cfg.train_fraction * static_cast<double>(plan.eligible)));
  plan.eval_begin = plan.train_count + (plan.train_count > 0 ? cfg.horizon : 0);
  if (plan.eval_begin >= plan.eligible)
    throw InsufficientHistoryError("no evaluation origins left after " + std::to_string(plan.train_count) +
                                   " training origins and a " + std::to_string(cfg.horizon) + "-origin embargo");
  return plan;
}

/// Forecast, rule verdicts and features at `origin`; nothing when the forecaster has no forecast there.
inline std::optional<OriginSample> sample_origin(const Series& series, std::size_t origin, const Forecaster& forecaster,
                                                 std::span<const Rule> rules, const WalkForwardConfig& cfg) {
  const Window window = Window::trailing(series, origin, cfg.lookback);
  auto forecast = forecaster(window, ForecastConfig{cfg.horizon, cfg.coverage, true});
  if (!forecast) return std::nullopt;
  OriginSample s;
  s.forecast = std::move(*forecast);
  s.forecast.origin_index = origin;
  for (const auto& rule : rules)
    s.verdicts.push_back(evaluate_rule(rule, Window::trailing(series, origin, rule.max_lookback())));
  s.features = extract_features(window, s.forecast, s.verdicts);
  return s;
}

inline std::vector<std::string> rule_names(std::span<const Rule> rules) {
  std::vector<std::string> out;
  for (const auto& r : rules) out.push_back(r.name);
  return out;
}

/// Meta-labeled training set over origins [begin, end) of the plan.
inline std::vector<LabeledExample> build_training_set(const Series& series, const WalkForwardPlan& plan,
                                                      std::size_t begin, std::size_t end, const Forecaster& forecaster,
                                                      std::span<const Rule> rules, const WalkForwardConfig& cfg) {
  std::vector<LabeledExample> data;
  for (std::size_t i = begin; i < end; ++i) {
    auto s = sample_origin(series, plan.origin(i), forecaster, rules, cfg);
    if (!s) continue;
    data.push_back({std::move(s->features), meta_label(s->forecast, series)});
  }
  return data;
}

/// Chronological walk-forward sweep. The gate is trained once on the training segment unless a
/// pre-trained model is supplied (the split is applied either way).
inline WalkForwardResult walk_forward(const Series& series, const Forecaster& forecaster, std::span<const Rule> rules,
                                      const WalkForwardConfig& cfg, std::optional<GateModel> pretrained = std::nullopt) {
  const WalkForwardPlan plan = plan_walk_forward(series.size(), cfg, rules);
  WalkForwardResult result;
  if (pretrained) {
    result.gate = std::move(*pretrained);
  } else {
    if (plan.train_count == 0) throw TrainingError("train fraction leaves no origins to train the gate on");
    auto data = build_training_set(series, plan, 0, plan.train_count, forecaster, rules, cfg);
    result.training_examples = data.size();
    result.gate = train(data, cfg.train, nullptr, cfg.threshold, feature_names(rule_names(rules)));
  }

  for (std::size_t i = plan.eval_begin; i < plan.eligible; i += cfg.stride) {
    const std::size_t origin = plan.origin(i);
    auto s = sample_origin(series, origin, forecaster, rules, cfg);
    if (!s) continue;
    EvalRecord r;
    r.origin_index = origin;
    r.origin_timestamp = series[origin].timestamp;
    r.predicted = direction_of(s->forecast, series[origin].close);
    r.realized = side_of_move(series[origin].close, series[origin + cfg.horizon].close);
    r.decision = decide(score(result.gate, s->features), result.gate, s->verdicts, cfg.required_rules);
    r.forecast = std::move(s->forecast);
    result.records.push_back(std::move(r));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Metrics

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(std::span<const EvalRecord> records, Side positive, bool gated) {
  ConfusionMatrix cm;
  for (const auto& r : records) {
    if (gated && !r.decision.executed) continue;
    const bool pred_pos = r.predicted == positive;
    const bool real_pos = r.realized == positive;
    if (pred_pos && real_pos)
      ++cm.tp;
    else if (pred_pos)
      ++cm.fp;
    else if (real_pos)
      ++cm.fn;
    else
      ++cm.tn;
  }
  return cm;
}

/// A fraction, or nothing when its denominator is zero.
using Metric = std::optional<double>;

struct ClassificationMetrics {
  Metric accuracy, precision, recall, f1;
};

inline Metric ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline Metric f1_score(Metric precision, Metric recall) {
  if (!precision || !recall || *precision + *recall <= 0) return std::nullopt;
  return 2 * *precision * *recall / (*precision + *recall);
}

inline ClassificationMetrics metrics(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = ratio(cm.tp, cm.tp + cm.fn);
  m.f1 = f1_score(m.precision, m.recall);
  return m;
}

inline double execution_rate(std::span<const EvalRecord> records) {
  if (records.empty()) throw EmptyInputError("execution rate of an empty record set");
  auto executed = std::count_if(records.begin(), records.end(), [](const EvalRecord& r) { return r.decision.executed; });
  return static_cast<double>(executed) / static_cast<double>(records.size());
}

struct MetricsRow {
  std::string model;
  Side side = Side::Up;
  Metric accuracy, precision, recall, f1, execution_rate;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

/// Ungated and gated rows for each side, in the order Up/ungated, Up/gated, Down/ungated, Down/gated.
/// The execution rate of a side is measured over the records predicted on that side.
inline std::vector<MetricsRow> metrics_rows(std::span<const EvalRecord> records, const std::string& model) {
  std::vector<MetricsRow> rows;
  for (Side side : {Side::Up, Side::Down}) {
    std::vector<EvalRecord> on_side;
    for (const auto& r : records)
      if (r.predicted == side) on_side.push_back(r);
    for (bool gated : {false, true}) {
      const auto m = metrics(confusion(records, side, gated));
      MetricsRow row{gated ? model + " + gate" : model, side, m.accuracy, m.precision, m.recall, m.f1, std::nullopt};
      if (!on_side.empty()) row.execution_rate = gated ? execution_rate(on_side) : 1.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { Table, Json, Csv };

inline ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::Table;
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw DomainError("unknown report format '" + std::string(s) + "' (expected table, json or csv)");
}

inline constexpr std::string_view kReportCsvHeader = "model,side,accuracy,precision,recall,f1,execution_rate";
inline constexpr std::string_view kUndefinedCell = "—";

namespace detail {

inline std::size_t display_width(std::string_view s) {
  // counts UTF-8 code points
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

inline std::string percent_cell(const Metric& m) {
  if (!m) return std::string(kUndefinedCell);
  return std::to_string(std::lround(*m * 100.0)) + "%";
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_record(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline Side parse_side(std::string_view s, std::size_t row) {
  if (s == "Up") return Side::Up;
  if (s == "Down") return Side::Down;
  throw ParseError(row, "side must be Up or Down, got '" + std::string(s) + "'");
}

}  // namespace detail

inline std::string report(std::span<const MetricsRow> rows, ReportFormat format) {
  if (format == ReportFormat::Json) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    auto put = [](nlohmann::ordered_json& j, const char* key, const Metric& m) {
      j[key] = m ? nlohmann::ordered_json(*m) : nlohmann::ordered_json(nullptr);
    };
    for (const auto& r : rows) {
      nlohmann::ordered_json j;
      j["model"] = r.model;
      j["side"] = std::string(to_string(r.side));
      put(j, "accuracy", r.accuracy);
      put(j, "precision", r.precision);
      put(j, "recall", r.recall);
      put(j, "f1", r.f1);
      put(j, "execution_rate", r.execution_rate);
      arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
  }
  if (format == ReportFormat::Csv) {
    std::string out(kReportCsvHeader);
    out += '\n';
    auto cell = [](const Metric& m) { return m ? numfmt::shortest(*m) : std::string(); };
    for (const auto& r : rows) {
      out += detail::csv_escape(r.model) + ',' + std::string(to_string(r.side));
      for (const auto* m : {&r.accuracy, &r.precision, &r.recall, &r.f1, &r.execution_rate}) out += ',' + cell(*m);
      out += '\n';
    }
    return out;
  }

  std::vector<std::vector<std::string>> cells;
  cells.push_back({"Models", "Side", "Accuracy", "Precision", "Recall", "F1 score", "Execution Rate"});
  for (const auto& r : rows)
    cells.push_back({r.model, std::string(to_string(r.side)), detail::percent_cell(r.accuracy),
                     detail::percent_cell(r.precision), detail::percent_cell(r.recall), detail::percent_cell(r.f1),
                     detail::percent_cell(r.execution_rate)});
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& line : cells)
    for (std::size_t c = 0; c < line.size(); ++c) width[c] = std::max(width[c], detail::display_width(line[c]));
  std::string out;
  auto emit = [&](const std::vector<std::string>& line) {
    std::string text;
    for (std::size_t c = 0; c < line.size(); ++c) {
      if (c) text += "  ";
      text += line[c];
      if (c + 1 < line.size()) text.append(width[c] - detail::display_width(line[c]), ' ');
    }
    out += text + '\n';
  };
  emit(cells[0]);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
  for (std::size_t i = 1; i < cells.size(); ++i) emit(cells[i]);
  return out;
}

inline std::vector<MetricsRow> parse_report_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  auto lines = detail::read_lines(in);
  if (lines.empty()) throw EmptyInputError("empty report");
  if (lines[0] != kReportCsvHeader) throw ParseError(1, "expected header '" + std::string(kReportCsvHeader) + "'");
  std::vector<MetricsRow> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::size_t row_no = li + 1;
    auto f = detail::split_csv_record(lines[li]);
    if (f.size() != 7) throw ParseError(row_no, "expected 7 fields, got " + std::to_string(f.size()));
    MetricsRow r;
    r.model = f[0];
    r.side = detail::parse_side(f[1], row_no);
    Metric* targets[] = {&r.accuracy, &r.precision, &r.recall, &r.f1, &r.execution_rate};
    for (std::size_t k = 0; k < 5; ++k) {
      if (f[k + 2].empty()) continue;
      double v = 0;
      if (!numfmt::parse_double(f[k + 2], v)) throw ParseError(row_no, "non-numeric metric '" + f[k + 2] + "'");
      *targets[k] = v;
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<MetricsRow> parse_report_json(std::string_view text) {
  auto arr = nlohmann::ordered_json::parse(text);
  if (!arr.is_array()) throw ParseError(1, "report JSON must be an array of rows");
  std::vector<MetricsRow> rows;
  for (const auto& j : arr) {
    MetricsRow r;
    r.model = j.at("model").get<std::string>();
    r.side = detail::parse_side(j.at("side").get<std::string>(), rows.size() + 1);
    auto get = [&j](const char* key) -> Metric {
      const auto& v = j.at(key);
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    r.accuracy = get("accuracy");
    r.precision = get("precision");
    r.recall = get("recall");
    r.f1 = get("f1");
    r.execution_rate = get("execution_rate");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline constexpr std::string_view kForecastTraceHeader = "origin_timestamp,step,predicted,lower,upper,actual,executed";

/// Long-format forecast-vs-actual rows, one per (origin, step).
inline std::string emit_forecast_trace(std::span<const EvalRecord> records, const Series& series) {
  std::string out(kForecastTraceHeader);
  out += '\n';
  for (const auto& r : records) {
    const std::string ts = format_timestamp(r.origin_timestamp, series.timestamp_format());
    for (std::size_t k = 0; k < r.forecast.path.size(); ++k) {
      const std::size_t target = r.origin_index + k + 1;
      out += ts + ',' + std::to_string(k + 1) + ',' + numfmt::shortest(r.forecast.path[k]) + ',';
      if (r.forecast.interval)
        out += numfmt::shortest(r.forecast.interval->lower[k]) + ',' + numfmt::shortest(r.forecast.interval->upper[k]);
      else
        out += ',';
      out += ',';
      if (target < series.size()) out += numfmt::shortest(series[target].close);
      out += r.decision.executed ? ",1\n" : ",0\n";
    }
  }
  return out;
}

}  // namespace metagate
