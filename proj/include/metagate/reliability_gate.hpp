#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "metagate/errors.hpp"
#include "metagate/forecaster.hpp"
#include "metagate/indicators.hpp"
#include "metagate/market_data.hpp"
#include "metagate/numfmt.hpp"
#include "metagate/rule_engine.hpp"

namespace metagate {

/// Order: predicted_move, realized_volatility, support_slope, resistance_slope, support_distance,
/// resistance_distance, one bit per rule verdict, bias.
struct FeatureVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

inline constexpr std::size_t kBaseFeatureCount = 7;  // six market features + bias

inline std::vector<std::string> feature_names(std::span<const std::string> rule_names) {
  std::vector<std::string> names = {"predicted_move",   "realized_volatility", "support_slope",
                                    "resistance_slope", "support_distance",    "resistance_distance"};
  for (const auto& r : rule_names) names.push_back("rule:" + r);
  names.emplace_back("bias");
  return names;
}

inline std::vector<std::string> rule_names_of(std::span<const RuleVerdict> verdicts) {
  std::vector<std::string> out;
  for (const auto& v : verdicts) out.push_back(v.rule);
  return out;
}

inline FeatureVector extract_features(const Window& w, const Forecast& f, std::span<const RuleVerdict> verdicts) {
  if (f.origin_index != w.last_index())
    throw DomainError("forecast origin " + std::to_string(f.origin_index) + " does not match window end " +
                      std::to_string(w.last_index()));
  if (f.path.empty()) throw DomainError("forecast has an empty path");
  const double last = w.last().close;
  const double n1 = static_cast<double>(w.size() - 1);
  const TrendLine support = fit_support_line(w);
  const TrendLine resistance = fit_resistance_line(w);

  FeatureVector x;
  x.values = {
      (f.path.back() - last) / last,
      realized_volatility(w),
      support.slope / last,
      resistance.slope / last,
      (last - support.at(n1)) / last,
      (resistance.at(n1) - last) / last,
  };
  for (const auto& v : verdicts) x.values.push_back(v.passed ? 1.0 : 0.0);
  x.values.push_back(1.0);

  const auto names = feature_names(rule_names_of(verdicts));
  for (std::size_t i = 0; i < x.values.size(); ++i)
    if (!std::isfinite(x.values[i])) throw FeatureError("non-finite feature '" + names[i] + "'");
  return x;
}

/// 1 when the forecast's call matches the realized move over the same span, else 0.
inline int meta_label(const Forecast& f, const Series& realized) {
  const std::size_t end = f.origin_index + f.horizon;
  if (f.horizon == 0 || end >= realized.size())
    throw InsufficientHistoryError("need candles up to index " + std::to_string(end) + " to label origin " +
                                   std::to_string(f.origin_index) + ", series has " + std::to_string(realized.size()));
  const double origin_close = realized[f.origin_index].close;
  return direction_of(f, origin_close) == side_of_move(origin_close, realized[end].close) ? 1 : 0;
}

struct TrainConfig {
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;  // weights start at zero; recorded only
};

struct GateModel {
  std::vector<double> weights;
  double threshold = 0.5;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  std::vector<std::string> feature_names;
  TrainConfig config;
  double final_loss = 0;

  std::size_t dimension() const noexcept { return weights.size(); }
};

struct LabeledExample {
  FeatureVector x;
  int label = 0;
};

struct GateDecision {
  bool executed = false;
  bool vetoed = false;  // a required rule failed
  double score = 0;
  std::vector<std::string> reasons;

  friend bool operator==(const GateDecision&, const GateDecision&) = default;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + e^z) without overflow
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Mean log-loss of a logistic model over already-standardized rows.
inline double log_loss(std::span<const double> w, std::span<const std::vector<double>> rows, std::span<const int> labels) {
  double total = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double z = 0;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * rows[i][j];
    total += softplus(z) - labels[i] * z;
  }
  return total / static_cast<double>(rows.size());
}

inline std::vector<double> log_loss_gradient(std::span<const double> w, std::span<const std::vector<double>> rows,
                                             std::span<const int> labels) {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double z = 0;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * rows[i][j];
    const double err = sigmoid(z) - labels[i];
    for (std::size_t j = 0; j < w.size(); ++j) g[j] += err * rows[i][j];
  }
  for (double& v : g) v /= static_cast<double>(rows.size());
  return g;
}

/// Applies the model's stored standardization. The bias (last) column passes through.
inline std::vector<double> standardize(const GateModel& m, const FeatureVector& x) {
  if (x.size() != m.dimension())
    throw DomainError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                      std::to_string(m.dimension()));
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x.values[j] - m.feature_mean[j]) / m.feature_std[j];
  return z;
}

/// Full-batch gradient descent from zero weights. `loss_history`, when given, receives the
/// loss before each update and after the last one.
inline GateModel train(std::span<const LabeledExample> dataset, const TrainConfig& cfg,
                       std::vector<double>* loss_history = nullptr, double threshold = 0.5,
                       std::vector<std::string> names = {}) {
  if (dataset.empty()) throw TrainingError("cannot train the gate on an empty dataset");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw TrainingError("learning rate must be a positive finite number, got " + numfmt::shortest(cfg.learning_rate));
  const std::size_t dim = dataset.front().x.size();
  if (dim == 0) throw TrainingError("empty feature vectors");
  std::size_t positives = 0;
  for (const auto& e : dataset) {
    if (e.x.size() != dim) throw TrainingError("inconsistent feature vector lengths in dataset");
    if (e.label != 0 && e.label != 1) throw TrainingError("labels must be 0 or 1");
    positives += static_cast<std::size_t>(e.label);
  }
  if (positives == 0 || positives == dataset.size())
    throw TrainingError("degenerate class balance: all " + std::to_string(dataset.size()) + " labels are " +
                        (positives == 0 ? "0" : "1"));

  GateModel m;
  m.config = cfg;
  m.threshold = threshold;
  m.feature_names = names.empty() ? std::vector<std::string>{} : std::move(names);
  m.feature_mean.assign(dim, 0.0);
  m.feature_std.assign(dim, 1.0);
  const double n = static_cast<double>(dataset.size());
  for (std::size_t j = 0; j + 1 < dim; ++j) {
    double mean = 0;
    for (const auto& e : dataset) mean += e.x.values[j];
    mean /= n;
    double var = 0;
    for (const auto& e : dataset) var += (e.x.values[j] - mean) * (e.x.values[j] - mean);
    const double sd = std::sqrt(var / n);
    m.feature_mean[j] = mean;
    m.feature_std[j] = sd > 1e-12 ? sd : 1.0;
  }
  m.weights.assign(dim, 0.0);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  rows.reserve(dataset.size());
  for (const auto& e : dataset) {
    rows.push_back(standardize(m, e.x));
    labels.push_back(e.label);
  }

  auto checked_loss = [&](std::size_t epoch) {
    const double loss = log_loss(m.weights, rows, labels);
    if (!std::isfinite(loss))
      throw TrainingError("loss became non-finite at epoch " + std::to_string(epoch) + "; lower the learning rate (" +
                          numfmt::shortest(cfg.learning_rate) + ")");
    if (loss_history) loss_history->push_back(loss);
    return loss;
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    checked_loss(epoch);
    const auto g = log_loss_gradient(m.weights, rows, labels);
    for (std::size_t j = 0; j < dim; ++j) m.weights[j] -= cfg.learning_rate * g[j];
    for (double w : m.weights)
      if (!std::isfinite(w)) throw TrainingError("weights diverged; lower the learning rate");
  }
  m.final_loss = checked_loss(cfg.epochs);
  return m;
}

/// Logit is clamped to [-30, 30], so scores stay strictly inside (0, 1).
inline double score(const GateModel& m, const FeatureVector& x) {
  const auto z = standardize(m, x);
  double logit = 0;
  for (std::size_t j = 0; j < z.size(); ++j) logit += m.weights[j] * z[j];
  return sigmoid(std::clamp(logit, -30.0, 30.0));
}

namespace detail {

// Smallest precision (>= 2 decimals) that keeps the printed comparison truthful.
inline std::pair<std::string, std::string> comparable_text(double a, double b) {
  for (int d = 2; d < 12; ++d) {
    auto sa = numfmt::fixed(a, d), sb = numfmt::fixed(b, d);
    if ((sa == sb) == (a == b)) return {sa, sb};
  }
  return {numfmt::shortest(a), numfmt::shortest(b)};
}

}  // namespace detail

/// Executes iff score >= threshold and every required rule passed. Reasons are always populated.
inline GateDecision decide(double score_value, const GateModel& m, std::span<const RuleVerdict> verdicts,
                           std::span<const std::string> required_rules) {
  if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) throw DomainError("gate threshold must lie in [0, 1]");
  GateDecision d;
  d.score = score_value;
  const bool confident = score_value >= m.threshold;
  auto [s, t] = detail::comparable_text(score_value, m.threshold);
  d.reasons.push_back("score " + s + (confident ? " ≥ " : " < ") + t);

  bool justified = true;
  for (const auto& name : required_rules) {
    auto it = std::find_if(verdicts.begin(), verdicts.end(), [&](const RuleVerdict& v) { return v.rule == name; });
    if (it == verdicts.end()) throw DomainError("required rule '" + name + "' has no verdict");
  }
  for (const auto& v : verdicts) {
    const bool required = std::find(required_rules.begin(), required_rules.end(), v.rule) != required_rules.end();
    if (v.passed) {
      d.reasons.push_back("rule " + v.rule + " passed" + (required ? " (required)" : ""));
      continue;
    }
    const TraceEntry* fail = v.first_failure();
    std::string why = fail ? explain_entry(*fail) : "no predicate trace";
    if (required) {
      justified = false;
      d.reasons.push_back("veto: rule " + v.rule + " failed: " + why);
    } else {
      d.reasons.push_back("rule " + v.rule + " failed (not required): " + why);
    }
  }
  d.vetoed = !justified;
  d.executed = confident && justified;
  return d;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kGateModelFormat = 1;

inline nlohmann::ordered_json to_json(const GateModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kGateModelFormat;
  j["threshold"] = m.threshold;
  j["feature_names"] = m.feature_names;
  j["weights"] = m.weights;
  j["feature_mean"] = m.feature_mean;
  j["feature_std"] = m.feature_std;
  j["config"] = {{"epochs", m.config.epochs}, {"learning_rate", m.config.learning_rate}, {"seed", m.config.seed}};
  j["final_loss"] = m.final_loss;
  return j;
}

inline GateModel gate_model_from_json(const nlohmann::ordered_json& j) {
  if (!j.contains("format") || j.at("format").get<int>() != kGateModelFormat)
    throw ParseError(1, "gate model: unsupported or missing format (expected " + std::to_string(kGateModelFormat) + ")");
  GateModel m;
  m.threshold = j.at("threshold").get<double>();
  m.feature_names = j.value("feature_names", std::vector<std::string>{});
  m.weights = j.at("weights").get<std::vector<double>>();
  m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
  m.feature_std = j.at("feature_std").get<std::vector<double>>();
  const auto& c = j.at("config");
  m.config.epochs = c.at("epochs").get<std::size_t>();
  m.config.learning_rate = c.at("learning_rate").get<double>();
  m.config.seed = c.at("seed").get<std::uint64_t>();
  m.final_loss = j.value("final_loss", 0.0);
  if (m.feature_mean.size() != m.weights.size() || m.feature_std.size() != m.weights.size())
    throw DomainError("gate model: standardization vectors do not match weight count");
  for (double w : m.weights)
    if (!std::isfinite(w)) throw DomainError("gate model: non-finite weight");
  if (!(m.threshold >= 0.0 && m.threshold <= 1.0)) throw DomainError("gate model: threshold outside [0, 1]");
  return m;
}

}  // namespace metagate
