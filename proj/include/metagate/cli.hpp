#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "metagate/errors.hpp"
#include "metagate/evaluation.hpp"
#include "metagate/forecaster.hpp"
#include "metagate/indicators.hpp"
#include "metagate/market_data.hpp"
#include "metagate/prompt_prefix.hpp"
#include "metagate/reliability_gate.hpp"
#include "metagate/rule_engine.hpp"

namespace metagate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Thrown for bad flag values or config files; maps to exit status 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string data;
  std::string symbol;
  std::size_t lookback = 110;
  std::size_t horizon = 7;
  std::string forecaster = "drift";
  std::vector<std::string> rules = {"bottoming_tail_candle"};
  std::vector<std::string> require_rules;
  double threshold = 0.5;
  double train_fraction = 0.7;
  std::size_t stride = 1;
  std::uint64_t seed = 0;
  std::size_t epochs = 500;
  double learning_rate = 0.1;
  double coverage = kOneSigmaCoverage;
  std::string format = "table";
  std::string report;
  std::string trace;
  std::string gate;
  std::string out;
  std::string input;
  std::string asset;
  std::string domain;
  std::string domain_file;
  std::size_t samples = 6;
  std::optional<std::size_t> origin;
  std::string rule = "bottoming_tail_candle";
  bool all = false;
};

/// Applies a JSON config object onto `cfg`. Keys use the long flag names with '_' for '-'.
/// Relative input paths (data, gate, input, domain_file) resolve against `base_dir` when given.
inline void apply_config_json(const nlohmann::json& j, RunConfig& cfg, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  auto input_path = [&](const nlohmann::json& v) {
    std::filesystem::path p = v.get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    return p.string();
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const auto& v = it.value();
    try {
      if (key == "data") cfg.data = input_path(v);
      else if (key == "symbol") cfg.symbol = v.get<std::string>();
      else if (key == "lookback") cfg.lookback = v.get<std::size_t>();
      else if (key == "horizon") cfg.horizon = v.get<std::size_t>();
      else if (key == "forecaster") cfg.forecaster = v.get<std::string>();
      else if (key == "rules") cfg.rules = v.get<std::vector<std::string>>();
      else if (key == "require_rules") cfg.require_rules = v.get<std::vector<std::string>>();
      else if (key == "threshold") cfg.threshold = v.get<double>();
      else if (key == "train_fraction") cfg.train_fraction = v.get<double>();
      else if (key == "stride") cfg.stride = v.get<std::size_t>();
      else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (key == "epochs") cfg.epochs = v.get<std::size_t>();
      else if (key == "learning_rate") cfg.learning_rate = v.get<double>();
      else if (key == "coverage") cfg.coverage = v.get<double>();
      else if (key == "format") cfg.format = v.get<std::string>();
      else if (key == "report") cfg.report = v.get<std::string>();
      else if (key == "trace") cfg.trace = v.get<std::string>();
      else if (key == "gate") cfg.gate = input_path(v);
      else if (key == "out") cfg.out = v.get<std::string>();
      else if (key == "input") cfg.input = input_path(v);
      else if (key == "asset") cfg.asset = v.get<std::string>();
      else if (key == "domain") cfg.domain = v.get<std::string>();
      else if (key == "domain_file") cfg.domain_file = input_path(v);
      else if (key == "samples") cfg.samples = v.get<std::size_t>();
      else if (key == "origin") cfg.origin = v.get<std::size_t>();
      else if (key == "rule") cfg.rule = v.get<std::string>();
      else if (key == "all") cfg.all = v.get<bool>();
      else throw UsageError("unknown config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config key '" + key + "': " + e.what());
    }
  }
}

namespace detail {

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << content;
}

inline Series load_series(const RunConfig& cfg) {
  if (cfg.data.empty()) throw UsageError("--data is required");
  std::string symbol = cfg.symbol.empty() ? std::filesystem::path(cfg.data).stem().string() : cfg.symbol;
  Series s = parse_csv(read_file(cfg.data), symbol);
  validate(s);
  return s;
}

inline Forecaster load_forecaster(const RunConfig& cfg, const Series& series) {
  constexpr std::string_view kExternal = "external:";
  if (cfg.forecaster.rfind(kExternal, 0) == 0)
    return make_external(load_external_forecasts(read_file(cfg.forecaster.substr(kExternal.size())), series));
  return make_baseline(cfg.forecaster);
}

inline std::string model_label(const RunConfig& cfg) {
  return cfg.forecaster.rfind("external:", 0) == 0 ? "external" : cfg.forecaster;
}

inline std::vector<Rule> load_rules(const std::vector<std::string>& names) {
  std::vector<Rule> rules;
  for (const auto& n : names) rules.push_back(rule_by_name(n));
  return rules;
}

inline WalkForwardConfig walk_forward_config(const RunConfig& cfg) {
  WalkForwardConfig w;
  w.lookback = cfg.lookback;
  w.horizon = cfg.horizon;
  w.stride = cfg.stride;
  w.train_fraction = cfg.train_fraction;
  w.coverage = cfg.coverage;
  w.threshold = cfg.threshold;
  w.train = TrainConfig{cfg.epochs, cfg.learning_rate, cfg.seed};
  w.required_rules = cfg.require_rules;
  return w;
}

}  // namespace detail

inline int cmd_validate(const RunConfig& cfg, std::ostream& out) {
  Series s = detail::load_series(cfg);
  out << "OK " << s.size() << " candles\n";
  return kExitOk;
}

inline int cmd_rules_scan(const RunConfig& cfg, std::ostream& out) {
  const Series s = detail::load_series(cfg);
  const Rule rule = rule_by_name(cfg.rule);
  const std::size_t lookback = rule.max_lookback();
  if (s.size() < lookback)
    throw InsufficientHistoryError("rule " + rule.name + " needs " + std::to_string(lookback) + " candles, series has " +
                                   std::to_string(s.size()));
  const bool json = cfg.format == "json";
  nlohmann::ordered_json blocks = nlohmann::ordered_json::array();
  std::size_t matches = 0;
  for (std::size_t i = lookback - 1; i < s.size(); ++i) {
    const RuleVerdict v = evaluate_rule(rule, Window::trailing(s, i, lookback));
    matches += v.passed ? 1 : 0;
    if (!v.passed && !cfg.all) continue;
    const std::string ts = format_timestamp(s[i].timestamp, s.timestamp_format());
    if (json) {
      nlohmann::ordered_json b;
      b["index"] = i;
      b["timestamp"] = ts;
      b["verdict"] = to_json(v);
      blocks.push_back(std::move(b));
    } else {
      out << "== " << ts << " (index " << i << ") ==\n";
      for (const auto& line : explain(v)) out << line << '\n';
      out << '\n';
    }
  }
  if (json)
    out << blocks.dump(2) << '\n';
  else
    out << matches << (matches == 1 ? " match\n" : " matches\n");
  return kExitOk;
}

inline int cmd_forecast(const RunConfig& cfg, std::ostream& out) {
  const Series s = detail::load_series(cfg);
  const Forecaster forecaster = detail::load_forecaster(cfg, s);
  const std::size_t origin = cfg.origin.value_or(s.size() - 1);
  const Window w = Window::trailing(s, origin, cfg.lookback);
  auto f = forecaster(w, ForecastConfig{cfg.horizon, cfg.coverage, true});
  if (!f) throw DomainError("no forecast available at origin index " + std::to_string(origin));
  out << "# origin " << format_timestamp(s[origin].timestamp, s.timestamp_format()) << " close "
      << numfmt::shortest(s[origin].close) << " direction " << to_string(direction_of(*f, s[origin].close)) << '\n';
  out << "step,predicted,lower,upper\n";
  for (std::size_t k = 0; k < f->path.size(); ++k) {
    out << k + 1 << ',' << numfmt::shortest(f->path[k]) << ',';
    if (f->interval) out << numfmt::shortest(f->interval->lower[k]) << ',' << numfmt::shortest(f->interval->upper[k]);
    else out << ',';
    out << '\n';
  }
  return kExitOk;
}

/// Trains the gate on every eligible origin of the series and writes the model JSON.
inline int cmd_train_gate(const RunConfig& cfg, std::ostream& out) {
  const Series s = detail::load_series(cfg);
  const Forecaster forecaster = detail::load_forecaster(cfg, s);
  const auto rules = detail::load_rules(cfg.rules);
  WalkForwardConfig wf = detail::walk_forward_config(cfg);
  wf.train_fraction = 0.0;
  const WalkForwardPlan plan = plan_walk_forward(s.size(), wf, rules);
  const auto data = build_training_set(s, plan, 0, plan.eligible, forecaster, rules, wf);
  const GateModel m = train(data, wf.train, nullptr, cfg.threshold, feature_names(rule_names(rules)));
  const std::string text = to_json(m).dump(2) + "\n";
  if (cfg.out.empty()) {
    out << text;
  } else {
    detail::write_file(cfg.out, text);
    out << "trained gate on " << data.size() << " examples, final loss " << numfmt::fixed(m.final_loss, 6)
        << ", written to " << cfg.out << '\n';
  }
  return kExitOk;
}

inline int cmd_backtest(const RunConfig& cfg, std::ostream& out) {
  const ReportFormat format = parse_report_format(cfg.format);
  const Series s = detail::load_series(cfg);
  const Forecaster forecaster = detail::load_forecaster(cfg, s);
  const auto rules = detail::load_rules(cfg.rules);
  const WalkForwardConfig wf = detail::walk_forward_config(cfg);
  std::optional<GateModel> pretrained;
  if (!cfg.gate.empty()) {
    pretrained = gate_model_from_json(nlohmann::ordered_json::parse(detail::read_file(cfg.gate)));
    pretrained->threshold = cfg.threshold;
  }
  const WalkForwardResult result = walk_forward(s, forecaster, rules, wf, pretrained);
  const auto rows = metrics_rows(result.records, detail::model_label(cfg));
  out << report(rows, ReportFormat::Table);
  if (!cfg.report.empty()) detail::write_file(cfg.report, report(rows, format));
  if (!cfg.trace.empty()) detail::write_file(cfg.trace, emit_forecast_trace(result.records, s));
  return kExitOk;
}

inline int cmd_prompt(const RunConfig& cfg, std::ostream& out) {
  const Series s = detail::load_series(cfg);
  const Window w = Window::trailing(s, s.size() - 1, cfg.lookback);
  PromptConfig pc;
  pc.asset = cfg.asset.empty() ? s.symbol() : cfg.asset;
  if (!cfg.domain_file.empty()) {
    pc.domain = detail::read_file(cfg.domain_file);
    while (!pc.domain.empty() && (pc.domain.back() == '\n' || pc.domain.back() == '\r')) pc.domain.pop_back();
  } else if (!cfg.domain.empty()) {
    pc.domain = cfg.domain;
  } else {
    pc.domain = "Daily OHLCV candles for " + pc.asset + ".";
  }
  pc.lookback = cfg.lookback;
  pc.horizon = cfg.horizon;
  pc.line_samples = cfg.samples;
  const std::string text = build_prompt(w, pc);
  if (cfg.out.empty())
    out << text;
  else
    detail::write_file(cfg.out, text);
  return kExitOk;
}

/// Re-renders a saved report (CSV or JSON) in another format.
inline int cmd_report(const RunConfig& cfg, std::ostream& out) {
  if (cfg.input.empty()) throw UsageError("--input is required");
  const std::string text = detail::read_file(cfg.input);
  const auto first = text.find_first_not_of(" \t\r\n");
  const auto rows = (first != std::string::npos && text[first] == '[') ? parse_report_json(text) : parse_report_csv(text);
  const std::string rendered = report(rows, parse_report_format(cfg.format));
  if (cfg.out.empty())
    out << rendered;
  else
    detail::write_file(cfg.out, rendered);
  return kExitOk;
}

/// Entry point. args[0] is the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  // The config file is applied before flag parsing so that flags override it.
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    if (path.empty()) continue;
    try {
      apply_config_json(nlohmann::json::parse(detail::read_file(path)), cfg,
                        std::filesystem::path(path).parent_path());
    } catch (const UsageError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const std::exception& e) {
      err << "error: config file: " << e.what() << '\n';
      return kExitUsage;
    }
  }

  CLI::App app{"metagate: selective-execution forecasting with a reliability gate and candlestick rules", "metagate"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  auto data_opts = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file; flags override its values");
    sub->add_option("--data", cfg.data, "OHLCV CSV (timestamp,open,high,low,close,volume)");
    sub->add_option("--symbol", cfg.symbol, "series symbol (defaults to the file stem)");
  };
  auto model_opts = [&](CLI::App* sub) {
    sub->add_option("--lookback", cfg.lookback, "window length")->check(CLI::PositiveNumber);
    sub->add_option("--horizon", cfg.horizon, "forecast horizon in steps")->check(CLI::PositiveNumber);
    sub->add_option("--forecaster", cfg.forecaster, "naive | drift | linreg | external:<csv>");
    sub->add_option("--coverage", cfg.coverage, "central interval coverage")->check(CLI::Range(0.0, 1.0));
  };
  auto gate_opts = [&](CLI::App* sub) {
    sub->add_option("--rules", cfg.rules, "rules evaluated as gate features");
    sub->add_option("--threshold", cfg.threshold, "gate score threshold")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--epochs", cfg.epochs, "gradient descent epochs");
    sub->add_option("--lr", cfg.learning_rate, "learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "recorded in the model");
  };

  auto* validate_cmd = app.add_subcommand("validate", "parse and validate an OHLCV CSV");
  data_opts(validate_cmd);

  auto* scan_cmd = app.add_subcommand("rules-scan", "slide a rule across the series and explain matches");
  data_opts(scan_cmd);
  scan_cmd->add_option("--rule", cfg.rule, "rule name");
  scan_cmd->add_flag("--all", cfg.all, "print every window, not only matches");
  scan_cmd->add_option("--format", cfg.format, "text | json");

  auto* forecast_cmd = app.add_subcommand("forecast", "forecast from one origin");
  data_opts(forecast_cmd);
  model_opts(forecast_cmd);
  forecast_cmd->add_option("--origin", cfg.origin, "origin candle index (default: last)");

  auto* train_cmd = app.add_subcommand("train-gate", "train the reliability gate on every eligible origin");
  data_opts(train_cmd);
  model_opts(train_cmd);
  gate_opts(train_cmd);
  train_cmd->add_option("--out", cfg.out, "model JSON output path (default: stdout)");

  auto* backtest_cmd = app.add_subcommand("backtest", "walk-forward evaluation with gated and ungated metrics");
  data_opts(backtest_cmd);
  model_opts(backtest_cmd);
  gate_opts(backtest_cmd);
  backtest_cmd->add_option("--stride", cfg.stride, "origin stride")->check(CLI::PositiveNumber);
  backtest_cmd->add_option("--train-fraction", cfg.train_fraction, "leading share of origins used to train the gate");
  backtest_cmd->add_option("--require-rule", cfg.require_rules, "rules that must pass for execution");
  backtest_cmd->add_option("--gate", cfg.gate, "pre-trained gate model JSON");
  backtest_cmd->add_option("--format", cfg.format, "report file format: table | json | csv");
  backtest_cmd->add_option("--report", cfg.report, "report output path");
  backtest_cmd->add_option("--trace", cfg.trace, "forecast trace CSV output path");

  auto* prompt_cmd = app.add_subcommand("prompt", "emit the prompt prefix for the trailing window");
  data_opts(prompt_cmd);
  prompt_cmd->add_option("--lookback", cfg.lookback, "window length")->check(CLI::PositiveNumber);
  prompt_cmd->add_option("--horizon", cfg.horizon, "forecast horizon in steps")->check(CLI::PositiveNumber);
  prompt_cmd->add_option("--samples", cfg.samples, "points sampled from each line")->check(CLI::PositiveNumber);
  prompt_cmd->add_option("--asset", cfg.asset, "asset name used in the text");
  prompt_cmd->add_option("--domain", cfg.domain, "[Domain] paragraph");
  prompt_cmd->add_option("--domain-file", cfg.domain_file, "file holding the [Domain] paragraph");
  prompt_cmd->add_option("--out", cfg.out, "output path (default: stdout)");

  auto* report_cmd = app.add_subcommand("report", "re-render a saved report");
  report_cmd->add_option("--config", config_path, "JSON config file; flags override its values");
  report_cmd->add_option("--input", cfg.input, "report CSV or JSON");
  report_cmd->add_option("--format", cfg.format, "table | json | csv");
  report_cmd->add_option("--out", cfg.out, "output path (default: stdout)");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(cfg, out);
    if (*scan_cmd) return cmd_rules_scan(cfg, out);
    if (*forecast_cmd) return cmd_forecast(cfg, out);
    if (*train_cmd) return cmd_train_gate(cfg, out);
    if (*backtest_cmd) return cmd_backtest(cfg, out);
    if (*prompt_cmd) return cmd_prompt(cfg, out);
    if (*report_cmd) return cmd_report(cfg, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace metagate::cli
