// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "mapspell/checkpoint.hpp"
#include "mapspell/dataset.hpp"
#include "mapspell/distance.hpp"
#include "mapspell/experiment.hpp"
#include "mapspell/metrics.hpp"
#include "mapspell/miner.hpp"
#include "mapspell/normalizer.hpp"
#include "mapspell/synth.hpp"
#include "mapspell/tensor.hpp"
#include "mapspell/vocab.hpp"
#include "support/cli_pipeline.hpp"
#include "support/fuzz.hpp"
#include "support/grad_blocks.hpp"
#include "support/oracles.hpp"

using namespace mapspell;

namespace {

// Tolerances and thresholds.
constexpr double kMetricTol = 1e-4;
constexpr double kMinePrecision = 0.95;
constexpr double kMineRecall = 0.80;
constexpr double kGradRelErr = 1e-4;
constexpr double kPoolingTol = 1e-12;
constexpr double kTrendPretrainGain = 0.01;  // (a) pre-trained over supervised
constexpr double kTrendLstmGap = 0.02;       // (b) both encoders over the LSTM
constexpr double kTrendFrozenGap = 0.03;     // (c) frozen below unfrozen
constexpr std::size_t kTrendSeedsNeeded = 2;
constexpr double kTrendBudgetSeconds = 60 * 60;
constexpr double kMlmRatio = 0.8;
constexpr double kMlmInitialTol = 0.10;
constexpr std::size_t kMlmEpochs = 10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- AC1 --------------------------------------------------------------------

Outcome ac1_metrics() {
  const double misspelt = f1(0.8500, 0.8167);
  const double clean = f1(0.9549, 0.9642);
  const double macro = 0.5 * (0.8330 + 0.9595);
  const bool ok = std::abs(misspelt - 0.8330) <= kMetricTol && std::abs(clean - 0.9595) <= kMetricTol &&
                  std::abs(macro - 0.8962) <= kMetricTol;
  return {ok, fmt("f1_1=%.4f f1_0=%.4f macro=%.4f (tol %.0e)", misspelt, clean, macro, kMetricTol)};
}

// --- AC3 --------------------------------------------------------------------

Outcome ac3_mining() {
  const Gazetteer gaz = generate_gazetteer(42, 5000);
  const SyntheticLog log = generate_log(gaz, TypoChannel{}, BehaviorConfig{}, 20000, 42);
  const MiningResult mined = mine_sessions(log.sessions, MinerConfig{});
  std::set<std::pair<std::string, std::string>> truth;
  for (const auto& t : log.truth) truth.emplace(normalize_text(t.misspelt), normalize_text(t.correction));
  std::size_t hit = 0;
  for (const auto& [q, r] : mined.calibrated) hit += truth.contains({q, r.c});
  const double precision = mined.calibrated.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(mined.calibrated.size());
  const double recall = truth.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
  return {precision >= kMinePrecision && recall >= kMineRecall,
          fmt("precision=%.4f (>= %.2f) recall=%.4f (>= %.2f) over %zu mined / %zu injected pairs", precision, kMinePrecision,
              recall, kMineRecall, mined.calibrated.size(), truth.size())};
}

// --- AC4 --------------------------------------------------------------------

Outcome ac4_dp_oracles() {
  Rng rng(4);
  const std::string alphabet = "abcd";  // small alphabet forces shared characters
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    auto word = [&] {
      std::string s(rng.below(9), ' ');
      for (char& c : s) c = alphabet[rng.below(alphabet.size())];
      return s;
    };
    const std::string a = word(), b = word();
    mismatches += edit_distance(a, b) != oracle::edit_distance_recursive(a, b);
    mismatches += lcs_len(a, b) != oracle::lcs_enumerate(a, b);
  }
  return {mismatches == 0, fmt("%zu mismatches over 1000 pairs (len <= 8), exact equality", mismatches)};
}

// --- AC5 --------------------------------------------------------------------

Outcome ac5_gradients() {
  double worst = 0.0;
  std::string worst_name;
  const auto checks = testing::run_block_grad_checks(10, 7);
  for (const auto& c : checks)
    if (c.result.max_rel_error >= worst) worst = c.result.max_rel_error, worst_name = c.name;
  return {worst < kGradRelErr, fmt("%zu blocks x 10 probes, h=1e-5; worst %.2e in %s (< %.0e)", checks.size(), worst,
                                   worst_name.c_str(), kGradRelErr)};
}

// --- AC6 --------------------------------------------------------------------

std::string normalizer_invariants() {
  Rng rng(6);
  for (int i = 0; i < 10000; ++i) {
    const std::string raw = testing::random_query(rng);
    const std::string once = normalize_text(raw);
    if (once != normalize_text(once)) return "normalizer not idempotent on input " + std::to_string(i);
    if (!once.empty() && (once.front() == ' ' || once.back() == ' ')) return "untrimmed output";
    if (once.find("  ") != std::string::npos) return "double space";
    const std::u32string cps = to_u32(once);
    for (char32_t c : cps) {
      const auto gc = U_GET_GC_MASK(static_cast<UChar32>(c));
      if (c != U' ' && !(gc & (U_GC_L_MASK | U_GC_ND_MASK | U_GC_M_MASK))) return "disallowed code point in output";
      if (u_tolower(static_cast<UChar32>(c)) != static_cast<UChar32>(c)) return "output not case-folded";
    }
    if (testing::alnum_skeleton(raw) != testing::alnum_skeleton(once)) return "alphanumerics changed";
  }
  return {};
}

std::string split_invariants() {
  std::vector<LabeledExample> pool;
  for (int i = 0; i < 800; ++i) pool.push_back({"q" + std::to_string(i), "c" + std::to_string(i / 2), i % 2 == 0});
  Rng rng(66);
  for (int trial = 0; trial < 100; ++trial) {
    const double ratio = rng.uniform();
    const SplitSpec spec{1 + rng.below(300), 1 + rng.below(50), 1 + rng.below(50), ratio, static_cast<std::uint64_t>(trial)};
    const Splits s = split(pool, spec);
    std::set<std::string> seen;
    for (const auto* part : {&s.train, &s.dev, &s.test}) {
      for (const auto& r : *part)
        if (!seen.insert(r.query).second) return "query in two splits: " + r.query;
      const double pos = static_cast<double>(count_misspelt(*part));
      if (std::abs(pos - ratio * static_cast<double>(part->size())) > 1.0) return "ratio off by more than one example";
    }
  }
  return {};
}

std::string tokenizer_invariants() {
  const Gazetteer g = generate_gazetteer(16, 1000);
  const Vocabulary sub = build_subword_vocab(g.entities, 800);
  const Vocabulary words = build_word_vocab(g.entities, 100000);
  for (const auto& e : g.entities) {
    if (decode(encode(e, sub, 64), sub) != e) return "subword round trip failed: " + e;
    if (decode(encode(e, words, 64), words) != e) return "word round trip failed: " + e;
  }
  return {};
}

std::string numeric_invariants() {
  Rng rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> x(n);
    const double scale = rng.uniform(0.1, 50.0);
    for (double& v : x) v = rng.uniform(-scale, scale);
    const Tensor t = Tensor::from({1, n}, x);
    const auto p = ops::softmax(t).data();
    double sum = 0.0;
    for (double v : p) sum += v;
    if (std::abs(sum - 1.0) > 1e-12) return "softmax does not sum to 1";
    std::vector<double> shifted = x;
    for (double& v : shifted) v += 123.0;
    const auto q = ops::softmax(Tensor::from({1, n}, shifted)).data();
    for (std::size_t i = 0; i < n; ++i)
      if (std::abs(p[i] - q[i]) > 1e-12) return "softmax not shift invariant";
    const auto y = ops::layer_norm(t, Tensor::from({n}, std::vector<double>(n, 1.0)), Tensor::from({n}, std::vector<double>(n, 0.0))).data();
    double mean = 0.0, var = 0.0, in_mean = 0.0, in_var = 0.0;
    for (double v : x) in_mean += v / static_cast<double>(n);
    for (double v : x) in_var += (v - in_mean) * (v - in_mean) / static_cast<double>(n);
    for (double v : y) mean += v / static_cast<double>(n);
    for (double v : y) var += (v - mean) * (v - mean) / static_cast<double>(n);
    if (std::abs(mean) > 1e-10) return "layernorm mean not zero";
    if (std::abs(var - in_var / (in_var + 1e-5)) > 1e-12) return "layernorm variance off";
  }
  return {};
}

std::string checkpoint_invariants() {
  testing::TempDir dir;
  EncoderClassifier m(testing::tiny_encoder(2), HeadConfig{}, 5);
  const std::string path = dir.file("m.ckpt");
  save_checkpoint(path, "encoder+head", {{"x", 1}}, "hash", "v", m.params());
  const Checkpoint back = load_checkpoint(path);
  if (back.params.names() != m.params().names()) return "checkpoint names differ";
  if (back.params.snapshot() != m.params().snapshot()) return "checkpoint values not bit-exact";
  save_checkpoint(dir.file("again.ckpt"), "encoder+head", {{"x", 1}}, "hash", "v", back.params);
  if (testing::read_file(path) != testing::read_file(dir.file("again.ckpt"))) return "re-saved checkpoint differs";
  return {};
}

std::string determinism() {
  testing::TempDir a, b;
  for (const auto* d : {&a, &b})
    if (auto err = testing::run_small_pipeline(d->path()); !err.empty()) return "pipeline failed: " + err;
  const auto ta = testing::tree_contents(a.path()), tb = testing::tree_contents(b.path());
  if (ta.size() != tb.size()) return "different file sets";
  for (const auto& [name, body] : ta) {
    const auto it = tb.find(name);
    if (it == tb.end()) return "missing " + name;
    if (it->second != body) return name + " differs";
  }
  return {};
}

Outcome ac6_invariants() {
  const std::pair<const char*, std::function<std::string()>> suites[] = {
      {"normalizer", normalizer_invariants}, {"split", split_invariants},        {"tokenizer", tokenizer_invariants},
      {"numeric", numeric_invariants},       {"checkpoint", checkpoint_invariants}, {"determinism", determinism}};
  std::string detail;
  bool ok = true;
  for (const auto& [name, fn] : suites) {
    const std::string err = fn();
    detail += std::string(detail.empty() ? "" : " ") + name + (err.empty() ? "=ok" : "=FAIL(" + err + ")");
    ok = ok && err.empty();
  }
  return {ok, detail};
}

// --- AC7 --------------------------------------------------------------------

Outcome ac7_pooling() {
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    EncoderClassifier last(testing::tiny_encoder(4), HeadConfig{Pooling::LastLayerCls, 0.3, false}, seed);
    EncoderClassifier avg(testing::tiny_encoder(4), HeadConfig{Pooling::AvgLast4Cls, 0.3, false}, seed);
    Rng rng(seed);
    const std::vector<Tensor> stack(4, testing::random_param({3, 5, 8}, rng, 2.0));
    const auto a = last.head_logits(stack, {}).data();
    const auto b = avg.head_logits(stack, {}).data();
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {worst <= kPoolingTol, fmt("max |last - avg4| = %.1e over 20 heads (<= %.0e)", worst, kPoolingTol)};
}

// --- AC2 + AC8 --------------------------------------------------------------

struct TrendOutcome {
  Outcome trend;
  Outcome mlm;
};

TrendOutcome ac2_ac8_trend(const std::vector<std::uint64_t>& seeds, std::size_t shards) {
  const auto t0 = std::chrono::steady_clock::now();
  DeskModelConfig mcfg;
  mcfg.pretrain.max_epochs = kMlmEpochs;
  std::size_t wins = 0;
  std::string detail;
  std::optional<TrainHistory> mlm_history;
  std::size_t mlm_vocab = 0;
  for (std::uint64_t seed : seeds) {
    DeskDataConfig dcfg;
    dcfg.seed = seed;
    dcfg.shards = shards;
    const DeskData data = build_desk_data(dcfg);
    const TrendResult r = run_trend(data, mcfg, seed, [&](const std::string& msg) { std::cerr << "  [seed " << seed << "] " << msg << "\n"; });
    const double lstm = headline_f1(r.lstm.test), sup = headline_f1(r.supervised.test);
    const double pre = headline_f1(r.pretrained.test), frozen = headline_f1(r.frozen.test);
    const bool a = pre - sup >= kTrendPretrainGain;
    const bool b = pre - lstm >= kTrendLstmGap && sup - lstm >= kTrendLstmGap;
    const bool c = pre - frozen >= kTrendFrozenGap;
    wins += a && b && c;
    detail += fmt("[seed %llu lstm=%.4f sup=%.4f pre=%.4f frozen=%.4f a=%d b=%d c=%d] ", static_cast<unsigned long long>(seed),
                  lstm, sup, pre, frozen, a, b, c);
    if (!mlm_history) {
      mlm_history = r.pretrain;
      mlm_vocab = build_subword_vocab(data.pretrain_train, mcfg.subword_vocab_size, mcfg.subword_merge_cap).size();
    }
  }
  const double elapsed = seconds_since(t0);
  TrendOutcome out;
  const std::size_t needed = std::min(kTrendSeedsNeeded, seeds.size());
  out.trend = {wins >= needed && elapsed <= kTrendBudgetSeconds,
               detail + fmt("%zu/%zu seeds pass (need %zu); %.0fs (budget %.0fs)", wins, seeds.size(), needed, elapsed,
                            kTrendBudgetSeconds)};
  const double init = *mlm_history->initial_dev_loss;
  const double last = *mlm_history->epochs.back().dev_loss;
  const double uniform = std::log(static_cast<double>(mlm_vocab));
  out.mlm = {mlm_history->epochs.size() == kMlmEpochs && last <= kMlmRatio * init &&
                 std::abs(init - uniform) <= kMlmInitialTol * uniform,
             fmt("seed %llu: initial dev loss %.4f vs ln(%zu)=%.4f (within %.0f%%); after %zu epochs %.4f = %.3f x initial (<= %.1f)",
                 static_cast<unsigned long long>(seeds.front()), init, mlm_vocab, uniform, 100 * kMlmInitialTol,
                 mlm_history->epochs.size(), last, last / init, kMlmRatio)};
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mapspell acceptance suite"};
  std::vector<std::string> only;
  std::vector<std::uint64_t> seeds = {41, 42, 43};
  std::size_t shards = 1;
  app.add_option("--only", only, "Run only these criteria (AC1..AC8)");
  app.add_option("--seeds", seeds, "Seeds for the trend reproduction")->capture_default_str();
  app.add_option("--shards", shards, "Data-generation threads")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](const std::string& id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  int failures = 0;
  auto report = [&](const std::string& id, const std::string& title, const Outcome& o, double secs) {
    std::cout << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << title << ": " << o.detail << fmt("  (%.1fs)", secs) << std::endl;
    failures += !o.pass;
  };
  auto run = [&](const std::string& id, const std::string& title, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id, title, o, seconds_since(t0));
  };

  run("AC1", "metric arithmetic", ac1_metrics);
  run("AC3", "mining oracle", ac3_mining);
  run("AC4", "DP oracles", ac4_dp_oracles);
  run("AC5", "gradient verification", ac5_gradients);
  run("AC6", "invariant suites", ac6_invariants);
  run("AC7", "pooling equivalence", ac7_pooling);
  if (wanted("AC2") || wanted("AC8")) {
    const auto t0 = std::chrono::steady_clock::now();
    TrendOutcome t;
    try {
      t = ac2_ac8_trend(seeds, shards);
    } catch (const std::exception& e) {
      t.trend = t.mlm = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (wanted("AC2")) report("AC2", "trend reproduction", t.trend, secs);
    if (wanted("AC8")) report("AC8", "MLM learning check", t.mlm, secs);
  }
  return failures == 0 ? 0 : 1;
}
