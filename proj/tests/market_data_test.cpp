#include <gtest/gtest.h>

#include <random>
#include <string>

#include "metagate/market_data.hpp"
#include "test_support.hpp"

namespace metagate {
namespace {

TEST(ParseCsv, SingleRowMapsFields) {
  const Series s = parse_csv("timestamp,open,high,low,close,volume\n2025-07-08,108000,109000,107000,108100,123.4\n", "BTC");
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s.symbol(), "BTC");
  EXPECT_EQ(s[0].timestamp, 1751932800);
  EXPECT_EQ(s[0].open, 108000);
  EXPECT_EQ(s[0].high, 109000);
  EXPECT_EQ(s[0].low, 107000);
  EXPECT_EQ(s[0].close, 108100);
  EXPECT_EQ(s[0].volume, 123.4);
  EXPECT_EQ(s.timestamp_format(), TimestampFormat::IsoDate);
}

TEST(ParseCsv, HighBelowLowIsValidationErrorAtThatRow) {
  const std::string text =
      "timestamp,open,high,low,close,volume\n"
      "1,10,11,9,10,1\n"
      "2,10,9,11,10,1\n";
  try {
    parse_csv(text, "X");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.index(), 1u);
    EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos) << e.what();
  }
}

TEST(ParseCsv, MalformedRowsNameTheRow) {
  EXPECT_THROW(parse_csv("timestamp,open,high,low,close,volume\n1,2,3\n", "X"), ParseError);
  try {
    parse_csv("timestamp,open,high,low,close,volume\n1,10,11,9,10,1\n2,10,abc,9,10,1\n", "X");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 3u);
    EXPECT_NE(std::string(e.what()).find("high"), std::string::npos);
  }
}

TEST(ParseCsv, EmptyInput) {
  EXPECT_THROW(parse_csv("", "X"), EmptyInputError);
  EXPECT_THROW(parse_csv("timestamp,open,high,low,close,volume\n", "X"), EmptyInputError);
}

TEST(ParseCsv, RejectsWrongHeaderAndMixedTimestampFormats) {
  EXPECT_THROW(parse_csv("date,open,high,low,close,volume\n1,10,11,9,10,1\n", "X"), ParseError);
  EXPECT_THROW(parse_csv("timestamp,open,high,low,close,volume\n2025-01-01,10,11,9,10,1\n1736899200,10,11,9,10,1\n", "X"),
               ParseError);
  EXPECT_THROW(parse_csv("timestamp,open,high,low,close,volume\n2025-02-30,10,11,9,10,1\n", "X"), ParseError);
}

TEST(ParseCsv, AcceptsCrlf) {
  const Series s = parse_csv("timestamp,open,high,low,close,volume\r\n1,10,11,9,10,1\r\n2,10,11,9,10.5,2\r\n", "X");
  EXPECT_EQ(s.size(), 2u);
  EXPECT_EQ(to_csv(s), "timestamp,open,high,low,close,volume\n1,10,11,9,10,1\n2,10,11,9,10.5,2\n");
}

TEST(ParseCsv, GeneratedNinetyRowFileRoundTrips) {
  std::mt19937_64 rng(7);
  const Series original = testing::random_series(rng, 90);
  const std::string text = to_csv(original);
  const Series parsed = validate(parse_csv(text, "RW"));
  ASSERT_EQ(parsed.size(), 90u);
  for (std::size_t i = 1; i < parsed.size(); ++i) EXPECT_LT(parsed[i - 1].timestamp, parsed[i].timestamp);
  EXPECT_EQ(parsed, original);
}

TEST(ParseCsv, RoundTripIsIdentityOnValidatedSeries) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Series s = testing::random_series(rng, 1 + rng() % 60);
    if (trial % 2) s = Series(s.symbol(), {s.candles().begin(), s.candles().end()}, TimestampFormat::IsoDate);
    const Series once = parse_csv(to_csv(s), s.symbol());
    EXPECT_EQ(once, s);
    EXPECT_EQ(to_csv(once), to_csv(s));
  }
}

TEST(Validate, IdentityWhenValid) {
  const Series s = testing::series_from_closes({1, 2, 3});
  EXPECT_EQ(validate(s), s);
  EXPECT_EQ(validate(validate(s)), s);  // idempotent
}

TEST(Validate, EqualTimestampsReportedAtIndexOne) {
  const Series s("X", {testing::make_candle(5, 10, 11, 9, 10), testing::make_candle(5, 10, 11, 9, 10)});
  try {
    validate(s);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.index(), 1u);
    EXPECT_EQ(e.invariant(), "timestamps strictly increasing");
  }
}

TEST(Validate, OutOfOrderRejected) {
  const Series s("X", {testing::make_candle(5, 10, 11, 9, 10), testing::make_candle(4, 10, 11, 9, 10)});
  EXPECT_THROW(validate(s), ValidationError);
}

TEST(Validate, NegativeVolumeNamesInvariant) {
  const Series s("X", {testing::make_candle(1, 10, 11, 9, 10, -1)});
  try {
    validate(s);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.index(), 0u);
    EXPECT_EQ(e.invariant(), "volume >= 0");
  }
}

TEST(Validate, EmptySeriesRejected) { EXPECT_THROW(validate(Series("X", {})), EmptyInputError); }

TEST(Validate, BodyOutsideWicksRejected) {
  EXPECT_THROW(validate(Series("X", {testing::make_candle(1, 12, 11, 9, 10)})), ValidationError);
  EXPECT_THROW(validate(Series("X", {testing::make_candle(1, 10, 11, 9, 8)})), ValidationError);
  EXPECT_THROW(validate(Series("X", {testing::make_candle(1, 0, 11, 0, 10)})), ValidationError);
}

TEST(PctReturn, HandArithmetic) {
  const Series s = testing::series_from_closes({100, 110, 110});
  EXPECT_NEAR(pct_return(s, 0, 1), 0.10, 1e-15);
  EXPECT_EQ(pct_return(s, 1, 2), 0.0);
}

TEST(PctReturn, ErrorsOnBadIndices) {
  const Series s = testing::series_from_closes({100, 110});
  EXPECT_THROW(pct_return(s, 0, 2), DomainError);
  EXPECT_THROW(pct_return(s, 1, 1), DomainError);
  EXPECT_THROW(pct_return(s, 1, 0), DomainError);
}

TEST(PctReturn, AllPairsMatchDirectFormulaAndSign) {
  std::mt19937_64 rng(3);
  const Series s = testing::random_series(rng, 40);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double direct = (s[j].close - s[i].close) / s[i].close;
      const double r = pct_return(s, i, j);
      EXPECT_EQ(r, direct);
      const double diff = s[j].close - s[i].close;
      EXPECT_EQ(r > 0, diff > 0);
      EXPECT_EQ(r < 0, diff < 0);
    }
}

TEST(Window, BoundsAndTrailing) {
  const Series s = testing::series_from_closes({1, 2, 3, 4, 5});
  EXPECT_THROW(Window(s, 2, 2), DomainError);
  EXPECT_THROW(Window(s, 0, 6), DomainError);
  const Window w = Window::trailing(s, 4, 3);
  EXPECT_EQ(w.start_index(), 2u);
  EXPECT_EQ(w.size(), 3u);
  EXPECT_EQ(w.last().close, 5);
  EXPECT_THROW(Window::trailing(s, 1, 3), InsufficientHistoryError);
}

TEST(Timestamps, IsoRoundTrip) {
  std::int64_t ts = 0;
  TimestampFormat f{};
  ASSERT_TRUE(parse_timestamp("2024-02-29", ts, f));
  EXPECT_EQ(format_timestamp(ts, f), "2024-02-29");
  ASSERT_TRUE(parse_timestamp("1969-12-31", ts, f));
  EXPECT_EQ(ts, -86400);
  EXPECT_EQ(format_timestamp(ts, f), "1969-12-31");
}

}  // namespace
}  // namespace metagate
