#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "metagate/prompt_prefix.hpp"
#include "test_support.hpp"

namespace metagate {
namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Series btc_fixture() {
  std::ifstream in(std::string(METAGATE_DATA_DIR) + "/btc_prompt_fixture.csv");
  return validate(parse_csv(in, "BTC"));
}

PromptConfig btc_config() {
  PromptConfig cfg;
  cfg.lookback = 6;
  cfg.domain =
      "Bitcoin is a decentralised digital currency traded around the clock on many exchanges. Each row of the input "
      "is one daily candle; the value modelled here is the closing price in US dollars.";
  return cfg;
}

TEST(Prompt, FixtureStatisticsAndLines) {
  const Series s = btc_fixture();
  const std::string p = build_prompt(Window::whole(s), btc_config());
  EXPECT_NE(p.find("[Statistics]: The input has a minimum value of 26511.2 and a maximum value of 49011.4, with an "
                   "average value of 39621.6.\n"),
            std::string::npos)
      << p;
  EXPECT_NE(p.find("Here is the support line : [26511.03 28884.81 31258.58 33632.36 36006.13 38379.9]."),
            std::string::npos);
  EXPECT_NE(p.find("Here is the resistance line : [38130.86 40504.64 42878.41 45252.18 47625.96 49999.73]."),
            std::string::npos);
}

TEST(Prompt, MatchesGoldenFile) {
  const Series s = btc_fixture();
  EXPECT_EQ(build_prompt(Window::whole(s), btc_config()), slurp(std::string(METAGATE_GOLDEN_DIR) + "/btc_prompt.txt"));
}

TEST(Prompt, GivenLineParametersProduceTrimmedSequence) {
  const Series s = btc_fixture();
  const TrendLine sup{2373.774, 26511.034, LineKind::Support};
  const TrendLine res{2373.774, 38130.862, LineKind::Resistance};
  const std::string p = build_prompt(Window::whole(s), sup, res, btc_config());
  EXPECT_NE(p.find("[26511.03 28884.81 31258.58 33632.36 36006.13 38379.9]"), std::string::npos);
}

TEST(Prompt, InstructionsLine) {
  std::mt19937_64 rng(1);
  const Series s = testing::random_series(rng, 110);
  PromptConfig cfg;
  const std::string p = build_prompt(Window::whole(s), cfg);
  EXPECT_NE(p.find("\n[Instructions]: Predict the data for the next 7 steps given the previous 110 steps.\n"),
            std::string::npos);
  cfg.horizon = 3;
  EXPECT_NE(build_prompt(Window::whole(s), cfg).find("next 3 steps"), std::string::npos);
}

TEST(Prompt, SectionOrderFixedAndDeterministic) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Series s = testing::random_series(rng, 5 + rng() % 100, 10 + rng() % 5000);
    PromptConfig cfg;
    cfg.asset = t % 2 ? "Ether" : "Bitcoin";
    cfg.line_samples = 1 + rng() % 10;
    cfg.horizon = 1 + rng() % 30;
    const std::string p = build_prompt(Window::whole(s), cfg);
    EXPECT_EQ(p, build_prompt(Window::whole(s), cfg));
    std::size_t pos = 0;
    for (const char* marker : {"This dataset is the", "[Domain]:", "[Instructions]:", "[Statistics]:",
                               "Your predictions should", "1. Support Line:", "2. Resistance Line:"}) {
      const auto at = p.find(marker, pos);
      ASSERT_NE(at, std::string::npos) << marker;
      pos = at;
    }
    EXPECT_EQ(p.back(), '\n');
    EXPECT_EQ(p.find('\r'), std::string::npos);
  }
}

TEST(Prompt, StatisticsMatchWindowAtConfiguredPrecision) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Series s = testing::random_series(rng, 3 + rng() % 60, 100 + rng() % 10000);
    const Window w = Window::whole(s);
    double lo = w[0].close, hi = w[0].close, sum = 0;
    for (const auto& c : w.candles()) {
      lo = std::min(lo, c.close);
      hi = std::max(hi, c.close);
      sum += c.close;
    }
    PromptConfig cfg;
    cfg.stats_decimals = 3;
    const std::string p = build_prompt(w, cfg);
    const std::string expect = "minimum value of " + numfmt::trimmed(lo, 3) + " and a maximum value of " +
                               numfmt::trimmed(hi, 3) + ", with an average value of " +
                               numfmt::trimmed(sum / static_cast<double>(w.size()), 3) + ".";
    EXPECT_NE(p.find(expect), std::string::npos) << expect;
  }
}

TEST(Prompt, RejectsBadConfigAndSwappedLines) {
  const Series s = btc_fixture();
  PromptConfig cfg = btc_config();
  cfg.line_samples = 0;
  EXPECT_THROW(build_prompt(Window::whole(s), cfg), DomainError);
  const Window w = Window::whole(s);
  EXPECT_THROW(build_prompt(w, fit_resistance_line(w), fit_support_line(w), btc_config()), DomainError);
}

TEST(BracketedSequence, TrimsTrailingZeros) {
  EXPECT_EQ(bracketed_sequence({1.5, 2.0, 3.25, 38379.904}, 2), "[1.5 2 3.25 38379.9]");
  EXPECT_EQ(bracketed_sequence({}, 2), "[]");
}

}  // namespace
}  // namespace metagate
