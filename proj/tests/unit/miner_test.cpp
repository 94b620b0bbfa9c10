#include "mapspell/miner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "mapspell/synth.hpp"
#include "support/oracles.hpp"

namespace mapspell {
namespace {

KeystrokeSession typed(const std::string& id, const std::vector<std::string>& texts, std::optional<std::string> engaged) {
  KeystrokeSession s;
  s.session_id = id;
  for (std::size_t i = 0; i < texts.size(); ++i) s.snapshots.push_back({static_cast<std::int64_t>(i), texts[i]});
  s.engagement = std::move(engaged);
  return s;
}

TEST(BacktrackTest, CleanSessionYieldsNothing) {
  EXPECT_TRUE(backtrack_mine(script_session("s", "liberty bowl", SessionKind::Clean)).empty());
}

TEST(BacktrackTest, TypoThenSelectYieldsPair) {
  const auto pairs = backtrack_mine(script_session("s", "sno isle", SessionKind::Select, "sni osle"));
  ASSERT_EQ(1u, pairs.size());
  EXPECT_EQ((MinedPair{"sni osle", "sno isle", 1, PairSource::Backtrack}), pairs[0]);
}

TEST(BacktrackTest, SelfCorrectionRecoversTheFullTypo) {
  const auto pairs = backtrack_mine(script_session("s", "ponderosa auto", SessionKind::SelfCorrect, "pondarosa auto"));
  ASSERT_EQ(1u, pairs.size());
  EXPECT_EQ("pondarosa auto", pairs[0].q);
  EXPECT_EQ("ponderosa auto", pairs[0].c);
}

TEST(BacktrackTest, LongestCandidateWinsTiesGoLatest) {
  // Both "abxd" and "abdx" are at distance <= 2 from "abcd"; equal length, so the later one wins.
  DistanceBand band;
  band.max_rel_dist = 0.5;
  const auto pairs = backtrack_mine(typed("s", {"a", "abxd", "abdx", "abc"}, "abcd"), band);
  ASSERT_EQ(1u, pairs.size());
  EXPECT_EQ("abdx", pairs[0].q);
}

TEST(BacktrackTest, NoEngagementOrFarTextYieldsNothing) {
  EXPECT_TRUE(backtrack_mine(typed("s", {"abc"}, std::nullopt)).empty());
  EXPECT_TRUE(backtrack_mine(typed("s", {"zzzzzzzz"}, "ponderosa")).empty());
}

TEST(BacktrackTest, SnapshotsAreNormalizedBeforeComparison) {
  const auto pairs = backtrack_mine(typed("s", {"Sni", "Sni-Osle!"}, "Sno Isle"));
  ASSERT_EQ(1u, pairs.size());
  EXPECT_EQ("sni osle", pairs[0].q);
  EXPECT_EQ("sno isle", pairs[0].c);
}

TEST(TransferTest, Cases) {
  const auto with = script_session("s", "ponderosa auto", SessionKind::Transfer, "pondarosa auto");
  const auto pairs = transfer_mine(with);
  ASSERT_EQ(1u, pairs.size());
  EXPECT_EQ((MinedPair{"pondarosa auto", "ponderosa auto", 1, PairSource::Transfer}), pairs[0]);
  EXPECT_TRUE(transfer_mine(script_session("s", "liberty bowl", SessionKind::Clean)).empty());
  auto same = with;
  same.transfer_correction = TransferCorrection{"Ponderosa  Auto", "ponderosa auto"};
  EXPECT_TRUE(transfer_mine(same).empty());
}

TEST(ResolveTest, MajorityAndTieBreak) {
  const MinedPair qa{"q", "a"}, qb{"q", "b"};
  EXPECT_EQ((Resolved{"a", 3}), resolve_conflicts({qa, qb, qa, qa}).at("q"));
  EXPECT_EQ((Resolved{"a", 2}), resolve_conflicts({qb, qa, qb, qa}).at("q"));
  EXPECT_EQ((Resolved{"c", 1}), resolve_conflicts({{"q", "c"}}).at("q"));
  EXPECT_EQ((Resolved{"a", 5}), resolve_conflicts({{"q", "a", 5}, {"q", "b", 4}}).at("q"));
}

TEST(CalibrateTest, SurvivalThreshold) {
  CalibrationStats stats;
  stats.final_query_count = {{"good", 10}, {"bad", 1}};
  stats.corrected_away_count = {{"good", 1}, {"bad", 9}};
  const ResolvedPairs in = {{"goud", {"good", 1}}, {"bsd", {"bad", 1}}, {"x", {"unseen", 1}}};
  const auto out = calibrate(in, stats, 0.5);
  EXPECT_TRUE(out.contains("goud"));
  EXPECT_FALSE(out.contains("bsd"));
  EXPECT_TRUE(out.contains("x"));
  EXPECT_EQ(in, calibrate(in, stats, 0.0));
  EXPECT_THROW(calibrate(in, stats, 1.5), ConfigError);
}

TEST(EmitTest, LabelsAndTrueWins) {
  const ResolvedPairs pairs = {{"sni osle", {"sno isle", 1}}, {"liberty bowl", {"liberty blvd", 1}}};
  const std::vector<KeystrokeSession> sessions = {script_session("a", "liberty bowl", SessionKind::Clean),
                                                  script_session("b", "sno isle", SessionKind::Clean)};
  const auto rows = emit_labeled(pairs, sessions);
  const std::vector<LabeledExample> expected = {{"liberty bowl", "liberty blvd", true},
                                                {"sni osle", "sno isle", true},
                                                {"sno isle", "sno isle", false}};
  EXPECT_EQ(expected, rows);
}

// Band acceptance recomputed from the recursion oracle and brute-force LCS.
TEST(BandProperty, MatchesOracleDefinition) {
  Rng rng(4);
  const DistanceBand band;
  for (int i = 0; i < 2000; ++i) {
    std::string q, c;
    const std::size_t lq = rng.below(7), lc = 1 + rng.below(7);
    for (std::size_t k = 0; k < lq; ++k) q.push_back("abc"[rng.below(3)]);
    for (std::size_t k = 0; k < lc; ++k) c.push_back("abc"[rng.below(3)]);
    const auto d = oracle::edit_distance_recursive(q, c);
    const auto l = oracle::lcs_enumerate(q, c);
    const double n = static_cast<double>(lc);
    const bool expect = q.size() >= std::ceil(0.8 * n - 1e-9) && d >= 1 && d <= std::ceil(0.4 * n - 1e-9) &&
                        l >= std::ceil(0.5 * n - 1e-9);
    ASSERT_EQ(expect, band.accepts(to_u32(q), to_u32(c))) << q << " / " << c;
  }
}

TEST(BandTest, SetAndValidate) {
  DistanceBand b;
  b.set("max_rel_dist=0.25");
  EXPECT_DOUBLE_EQ(0.25, b.max_rel_dist);
  EXPECT_THROW(b.set("nope=1"), ConfigError);
  EXPECT_THROW(b.set("min_dist"), ConfigError);
  EXPECT_THROW(b.set("min_lcs_rel=abc"), ConfigError);
  b.min_dist = 0;
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(MinerProperty, PipelineInvariantsAndShardIndependence) {
  const auto g = generate_gazetteer(11, 300);
  const auto log = generate_log(g, TypoChannel{}, BehaviorConfig{}, 3000, 21);
  MinerConfig one, many;
  many.shards = 5;
  const auto a = mine_sessions(log.sessions, one);
  const auto b = mine_sessions(log.sessions, many);
  EXPECT_EQ(a.labeled, b.labeled);
  EXPECT_EQ(a.calibrated, b.calibrated);
  for (const auto& p : a.pairs) {
    EXPECT_NE(p.q, p.c);
    EXPECT_EQ(p.q, normalize_text(p.q));
    if (p.source == PairSource::Backtrack) EXPECT_TRUE(DistanceBand{}.accepts(to_u32(p.q), to_u32(p.c)));
  }
  std::set<std::string> queries;
  for (const auto& row : a.labeled) {
    EXPECT_NO_THROW(validate(row));
    EXPECT_TRUE(queries.insert(row.query).second);
  }
  for (const auto& [q, r] : a.calibrated) EXPECT_TRUE(a.resolved.contains(q));
}

}  // namespace
}  // namespace mapspell
