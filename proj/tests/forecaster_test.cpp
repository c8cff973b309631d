#include <gtest/gtest.h>

#include <random>

#include "metagate/forecaster.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace metagate {
namespace {

using testing::series_from_closes;

TEST(NormalQuantile, MatchesBisectionOracle) {
  for (double c : {0.1, 0.5, 0.68, kOneSigmaCoverage, 0.9, 0.95, 0.99, 0.9999})
    EXPECT_NEAR(coverage_z(c), oracle::z_for_coverage(c), 1e-12) << c;
  EXPECT_NEAR(coverage_z(kOneSigmaCoverage), 1.0, 1e-12);
  EXPECT_THROW(coverage_z(1.0), DomainError);
  EXPECT_THROW(coverage_z(0.0), DomainError);
}

TEST(NaiveForecast, RepeatsLastClose) {
  const Series s = series_from_closes({90, 95, 100});
  const Forecast f = naive_forecast(Window::whole(s), {3});
  EXPECT_EQ(f.horizon, 3u);
  EXPECT_EQ(f.path, (std::vector<double>{100, 100, 100}));
  EXPECT_EQ(f.origin_index, 2u);
}

TEST(NaiveForecast, ZeroVolatilityGivesZeroWidth) {
  const Series s = series_from_closes({100, 100, 100, 100});
  const Forecast f = naive_forecast(Window::whole(s), {5});
  ASSERT_TRUE(f.interval);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(f.interval->lower[k], 100);
    EXPECT_EQ(f.interval->upper[k], 100);
  }
}

TEST(NaiveForecast, OneSigmaWidthAtStepOne) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 20; ++t) {
    const Series s = testing::random_series(rng, 30);
    const Window w = Window::whole(s);
    const Forecast f = naive_forecast(w, {4});
    const double sigma = realized_volatility(w) * w.last().close;
    EXPECT_NEAR(f.interval->upper[0] - f.path[0], sigma, 1e-9);
    EXPECT_NEAR(f.path[0] - f.interval->lower[0], sigma, 1e-9);
    // sqrt(k) growth at 90% coverage
    const Forecast g = naive_forecast(w, {4, 0.9});
    const double z = oracle::z_for_coverage(0.9);
    EXPECT_NEAR(g.interval->upper[3] - g.path[3], z * sigma * 2.0, 1e-9);
  }
}

TEST(NaiveForecast, SingleCandleWindow) {
  const Series s = series_from_closes({42});
  const Forecast f = naive_forecast(Window::whole(s), {2});
  EXPECT_EQ(f.path, (std::vector<double>{42, 42}));
  EXPECT_EQ(f.interval->upper[1], 42);
}

TEST(DriftForecast, HandArithmetic) {
  const Series s = series_from_closes({100, 102, 104});
  EXPECT_EQ(drift_forecast(Window::whole(s), {2}).path, (std::vector<double>{106, 108}));
  const Series flat = series_from_closes({7, 7, 7});
  EXPECT_EQ(drift_forecast(Window::whole(flat), {3}).path, (std::vector<double>{7, 7, 7}));
  EXPECT_THROW(drift_forecast(Window(s, 0, 1), {2}), DomainError);
}

TEST(DriftForecast, ConstantStepsEqualMeanChange) {
  std::mt19937_64 rng(19);
  for (int t = 0; t < 50; ++t) {
    const Series s = testing::random_series(rng, 2 + rng() % 40);
    const Window w = Window::whole(s);
    double mean_change = 0;
    for (std::size_t i = 1; i < w.size(); ++i) mean_change += w[i].close - w[i - 1].close;
    mean_change /= static_cast<double>(w.size() - 1);
    const Forecast f = drift_forecast(w, {6});
    EXPECT_NEAR(f.path[0] - w.last().close, mean_change, 1e-9);
    for (std::size_t k = 1; k < f.path.size(); ++k) EXPECT_NEAR(f.path[k] - f.path[k - 1], mean_change, 1e-9);
  }
}

TEST(Intervals, WidthsNonDecreasingForNaiveAndDrift) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 30; ++t) {
    const Series s = testing::random_series(rng, 25);
    for (const Forecast& f : {naive_forecast(Window::whole(s), {7}), drift_forecast(Window::whole(s), {7})}) {
      for (std::size_t k = 1; k < 7; ++k) {
        EXPECT_GE(f.interval->upper[k] - f.interval->lower[k], f.interval->upper[k - 1] - f.interval->lower[k - 1]);
        EXPECT_LE(f.interval->lower[k], f.path[k]);
        EXPECT_GE(f.interval->upper[k], f.path[k]);
      }
    }
  }
}

TEST(LinregForecast, ExactLineExtrapolates) {
  std::vector<double> closes;
  for (int x = 0; x < 10; ++x) closes.push_back(3.0 * x + 50.0);
  const Series s = series_from_closes(closes);
  const Forecast f = linreg_forecast(Window::whole(s), {3});
  EXPECT_NEAR(f.path[0], 80, 1e-9);
  EXPECT_NEAR(f.path[1], 83, 1e-9);
  EXPECT_NEAR(f.path[2], 86, 1e-9);
  EXPECT_NEAR(f.interval->upper[0] - f.interval->lower[0], 0.0, 1e-9);
  const Series flat = series_from_closes({5, 5, 5, 5});
  EXPECT_EQ(linreg_forecast(Window::whole(flat), {2}).path, (std::vector<double>{5, 5}));
  EXPECT_THROW(linreg_forecast(Window(flat, 0, 1), {2}), DomainError);
}

TEST(LinregForecast, CoefficientsMatchNormalEquations) {
  std::mt19937_64 rng(29);
  for (int t = 0; t < 100; ++t) {
    const Series s = testing::random_series(rng, 2 + rng() % 150, 50 + rng() % 1000);
    const Window w = Window::whole(s);
    std::vector<double> x, y;
    for (std::size_t i = 0; i < w.size(); ++i) {
      x.push_back(static_cast<double>(i));
      y.push_back(w[i].close);
    }
    const auto [slope, intercept] = oracle::normal_equations(x, y);
    const LineFit fit = least_squares(y);
    EXPECT_NEAR(fit.slope, slope, 1e-9 * std::max(1.0, std::abs(slope)) + 1e-9 * y.back());
    EXPECT_NEAR(fit.intercept, intercept, 1e-9 * std::abs(intercept));
    const Forecast f = linreg_forecast(w, {2});
    const double n = static_cast<double>(w.size());
    EXPECT_NEAR(f.path[1], intercept + slope * (n + 1), 1e-9 * std::abs(f.path[1]));
  }
}

TEST(DirectionOf, TieIsDown) {
  Forecast f{1, {101}, std::nullopt, 0};
  EXPECT_EQ(direction_of(f, 100), Side::Up);
  f.path = {100};
  EXPECT_EQ(direction_of(f, 100), Side::Down);
  f.path = {99};
  EXPECT_EQ(direction_of(f, 100), Side::Down);
}

TEST(DirectionOf, AgreesWithPathReturnAndScaleInvariant) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(50, 150);
  for (int t = 0; t < 500; ++t) {
    Forecast f{5, {u(rng), u(rng), u(rng), u(rng), u(rng)}, std::nullopt, 0};
    const double last = u(rng);
    const Series joined = series_from_closes({last, f.path.back()});
    const double r = pct_return(joined, 0, 1);
    EXPECT_EQ(direction_of(f, last) == Side::Up, r > 0);
    Forecast scaled = f;
    const double k = 0.5 + (rng() % 100) / 10.0;
    for (auto& p : scaled.path) p *= k;
    EXPECT_EQ(direction_of(scaled, last * k), direction_of(f, last));
  }
}

TEST(Baselines, Deterministic) {
  std::mt19937_64 rng(41);
  const Series s = testing::random_series(rng, 60);
  for (const char* name : {"naive", "drift", "linreg"}) {
    const auto fc = make_baseline(name);
    EXPECT_EQ(fc(Window::whole(s), {7}), fc(Window::whole(s), {7})) << name;
  }
  EXPECT_THROW(make_baseline("chronos"), DomainError);
}

class ExternalForecasts : public ::testing::Test {
 protected:
  Series series = series_from_closes({10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
};

TEST_F(ExternalForecasts, SevenContiguousSteps) {
  std::string csv = "origin_timestamp,step,predicted_close\n";
  for (int k = 1; k <= 7; ++k) csv += "2024-01-02," + std::to_string(k) + "," + std::to_string(11 + k) + "\n";
  const auto fs = load_external_forecasts(csv, series);
  ASSERT_EQ(fs.size(), 1u);
  EXPECT_EQ(fs[0].forecast.horizon, 7u);
  EXPECT_EQ(fs[0].forecast.origin_index, 1u);
  EXPECT_FALSE(fs[0].forecast.interval);
  EXPECT_EQ(fs[0].forecast.path.back(), 18);
}

TEST_F(ExternalForecasts, GapNamesOrigin) {
  std::string csv = "origin_timestamp,step,predicted_close\n";
  for (int k : {1, 2, 3, 5, 6, 7}) csv += "2024-01-02," + std::to_string(k) + ",12\n";
  try {
    load_external_forecasts(csv, series);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("2024-01-02"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("expected step 4"), std::string::npos) << e.what();
  }
}

TEST_F(ExternalForecasts, UnknownOriginAndNonContiguousGroups) {
  EXPECT_THROW(load_external_forecasts("origin_timestamp,step,predicted_close\n2023-01-01,1,5\n", series), ParseError);
  const std::string interleaved =
      "origin_timestamp,step,predicted_close\n"
      "2024-01-02,1,5\n2024-01-03,1,5\n2024-01-02,2,5\n";
  EXPECT_THROW(load_external_forecasts(interleaved, series), ParseError);
  EXPECT_THROW(load_external_forecasts("origin_timestamp,step,predicted_close,lower\n", series), ParseError);
  EXPECT_THROW(load_external_forecasts("origin_timestamp,step,predicted_close,lower,upper\n2024-01-02,1,5,6,7\n", series),
               ParseError);
}

TEST_F(ExternalForecasts, RoundTrip) {
  std::mt19937_64 rng(43);
  std::vector<ExternalForecast> fs;
  for (std::size_t origin : {0u, 3u, 4u, 8u}) {
    Forecast f = origin == 0 ? naive_forecast(Window(series, 0, 1), {3})
                             : drift_forecast(Window(series, origin - 1, origin + 1), {1 + rng() % 9});
    f.origin_index = origin;
    fs.push_back({series[origin].timestamp, f});
  }
  const std::string csv = to_external_csv(fs, series.timestamp_format());
  EXPECT_EQ(csv.rfind(kExternalHeaderFull, 0), 0u);
  EXPECT_EQ(load_external_forecasts(csv, series), fs);

  for (auto& ef : fs) ef.forecast.interval.reset();
  const std::string bare = to_external_csv(fs, series.timestamp_format());
  EXPECT_EQ(bare.rfind(std::string(kExternalHeaderPath) + "\n", 0), 0u);
  EXPECT_EQ(load_external_forecasts(bare, series), fs);
}

TEST_F(ExternalForecasts, ForecasterLooksUpByOrigin) {
  std::string csv = "origin_timestamp,step,predicted_close\n2024-01-05,1,20\n2024-01-05,2,21\n";
  const auto fc = make_external(load_external_forecasts(csv, series));
  EXPECT_FALSE(fc(Window(series, 0, 3), {2}));
  const auto f = fc(Window(series, 0, 5), {2});
  ASSERT_TRUE(f);
  EXPECT_EQ(f->path, (std::vector<double>{20, 21}));
  EXPECT_THROW(fc(Window(series, 0, 5), {7}), DomainError);
}

}  // namespace
}  // namespace metagate
