#include "mapspell/dataset.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support/temp_dir.hpp"

namespace mapspell {
namespace {

using testing::TempDir;
using testing::write_file;

std::vector<LabeledExample> make_pool(std::size_t misspelt, std::size_t clean, const std::string& tag = "") {
  std::vector<LabeledExample> pool;
  for (std::size_t i = 0; i < misspelt; ++i) pool.push_back({"m" + tag + std::to_string(i), "c" + std::to_string(i), true});
  for (std::size_t i = 0; i < clean; ++i) {
    const std::string q = "k" + tag + std::to_string(i);
    pool.push_back({q, q, false});
  }
  return pool;
}

TEST(EnforceRatioTest, DownsamplesMisspelt) {
  const auto out = enforce_ratio(make_pool(300, 700), 0.2, 1);
  EXPECT_EQ(175u, count_misspelt(out));
  EXPECT_EQ(875u, out.size());
}

TEST(EnforceRatioTest, BalancedIsIdentity) {
  const auto pool = make_pool(500, 500);
  EXPECT_EQ(pool, enforce_ratio(pool, 0.5, 1));
}

TEST(EnforceRatioTest, DownsamplesCleanWhenMisspeltIsScarce) {
  const auto out = enforce_ratio(make_pool(100, 900), 0.5, 1);
  EXPECT_EQ(100u, count_misspelt(out));
  EXPECT_EQ(200u, out.size());
}

TEST(EnforceRatioTest, MissingClassNamed) {
  try {
    enforce_ratio(make_pool(10, 0), 0.2, 1);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("clean"), std::string::npos);
  }
  EXPECT_THROW(enforce_ratio(make_pool(0, 10), 0.2, 1), DataError);
  EXPECT_THROW(enforce_ratio(make_pool(1, 1), 1.5, 1), ConfigError);
}

TEST(EnforceRatioProperty, WithinOneExampleNoDuplicates) {
  Rng rng(31);
  for (int i = 0; i < 200; ++i) {
    const std::size_t m = 1 + rng.below(400), k = 1 + rng.below(400);
    const double target = 0.05 + 0.9 * rng.uniform();
    const auto out = enforce_ratio(make_pool(m, k), target, i);
    const double pos = static_cast<double>(count_misspelt(out));
    ASSERT_LE(std::abs(pos - target * static_cast<double>(out.size())), 1.0) << m << " " << k << " " << target;
    std::set<std::string> q;
    for (const auto& r : out) ASSERT_TRUE(q.insert(r.query).second);
  }
}

TEST(SplitTest, ScaledSizesAreExactAndDisjoint) {
  const auto s = split(make_pool(200, 800), {980, 10, 10, 0.2, 5});
  EXPECT_EQ(980u, s.train.size());
  EXPECT_EQ(10u, s.dev.size());
  EXPECT_EQ(10u, s.test.size());
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.dev, &s.test})
    for (const auto& r : *part) EXPECT_TRUE(seen.insert(r.query).second) << r.query;
  EXPECT_EQ(196u, count_misspelt(s.train));
  EXPECT_EQ(2u, count_misspelt(s.dev));
  EXPECT_EQ(2u, count_misspelt(s.test));
}

TEST(SplitTest, DuplicatesCollapsedBeforeAssignment) {
  auto pool = make_pool(20, 80);
  pool.push_back(pool[0]);
  pool.push_back(pool[30]);
  const auto s = split(pool, {80, 10, 10, 0.2, 1});
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.dev, &s.test})
    for (const auto& r : *part) EXPECT_TRUE(seen.insert(r.query).second);
  EXPECT_EQ(100u, seen.size());
}

TEST(SplitTest, DeterministicPerSeed) {
  const auto pool = make_pool(300, 900);
  const auto a = split(pool, {800, 100, 100, 0.2, 9});
  const auto b = split(pool, {800, 100, 100, 0.2, 9});
  const auto c = split(pool, {800, 100, 100, 0.2, 10});
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.train, c.train);
}

TEST(SplitTest, InsufficientPoolReportsCounts) {
  try {
    split(make_pool(10, 10), {15, 5, 5, 0.2, 1});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("20"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("25"), std::string::npos);
  }
  EXPECT_THROW(split(make_pool(1, 100), {50, 25, 25, 0.5, 1}), DataError);
}

TEST(SplitProperty, RatioWithinOneInEverySplit) {
  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const double ratio = rng.uniform();
    const SplitSpec spec{1 + rng.below(300), 1 + rng.below(50), 1 + rng.below(50), ratio, static_cast<std::uint64_t>(i)};
    const auto s = split(make_pool(400, 400), spec);
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
      const double pos = static_cast<double>(count_misspelt(*part));
      ASSERT_LE(std::abs(pos - ratio * static_cast<double>(part->size())), 1.0);
    }
  }
}

TEST(TsvTest, RoundTrip) {
  TempDir dir;
  auto rows = make_pool(250, 750);
  rows[3].correction = "";
  write_tsv(rows, dir.file("x.tsv"));
  EXPECT_EQ(rows, read_tsv(dir.file("x.tsv")));
}

TEST(TsvTest, TwoColumnRowReportsLine) {
  TempDir dir;
  write_file(dir.file("bad.tsv"), "a\ta\tFalse\nb\tTrue\n");
  try {
    read_tsv(dir.file("bad.tsv"));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(2u, e.line());
  }
}

TEST(TsvTest, BadLabelAndContradictionRejected) {
  TempDir dir;
  write_file(dir.file("a.tsv"), "a\ta\tyes\n");
  EXPECT_THROW(read_tsv(dir.file("a.tsv")), ParseError);
  write_file(dir.file("b.tsv"), "a\tb\tFalse\n");
  EXPECT_THROW(read_tsv(dir.file("b.tsv")), ParseError);
}

TEST(TsvTest, EmptyFileAndMissingFile) {
  TempDir dir;
  write_file(dir.file("e.tsv"), "");
  EXPECT_TRUE(read_tsv(dir.file("e.tsv")).empty());
  EXPECT_THROW(read_tsv(dir.file("missing.tsv")), IoError);
}

}  // namespace
}  // namespace mapspell
