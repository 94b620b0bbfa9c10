// mapspell command-line entry point: synth -> mine -> split -> build-vocab ->
// pretrain -> finetune -> evaluate -> predict -> report.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "mapspell/dataset.hpp"
#include "mapspell/embeddings.hpp"
#include "mapspell/encoder.hpp"
#include "mapspell/experiment.hpp"
#include "mapspell/inference.hpp"
#include "mapspell/lstm.hpp"
#include "mapspell/manifest.hpp"
#include "mapspell/miner.hpp"
#include "mapspell/normalizer.hpp"
#include "mapspell/synth.hpp"
#include "mapspell/train.hpp"
#include "mapspell/vocab.hpp"

namespace fs = std::filesystem;
using namespace mapspell;
using json = nlohmann::ordered_json;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kIo = 3, kData = 4, kHash = 5, kRuntime = 6 };

std::string g_command_line;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir, "cannot create directory: " + ec.message());
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

/// Query texts from a labeled TSV (query column) or a plain one-per-line file.
std::vector<std::string> read_texts(const std::string& path) {
  if (path.ends_with(".tsv")) {
    std::vector<std::string> q;
    for (auto& r : read_tsv(path)) q.push_back(std::move(r.query));
    return q;
  }
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << content;
  if (!out) throw IoError(path, "write failed");
}

EpochCallback progress(const std::string& label) {
  return [label](const EpochRecord& e) {
    std::cerr << label << " epoch " << e.epoch << "  train_loss " << std::fixed << std::setprecision(4) << e.train_loss;
    if (e.dev) std::cerr << "  dev_macro_f1 " << headline_f1(*e.dev) << "  dev_f1_1 " << e.dev->misspelt.f1;
    if (e.dev_loss) std::cerr << "  dev_loss " << *e.dev_loss;
    std::cerr << "  (" << std::setprecision(1) << e.seconds << "s)\n" << std::defaultfloat;
  };
}

// ---------------------------------------------------------------------------
// Options shared by every subcommand

struct Common {
  std::uint64_t seed = 42;
  std::string out;
  std::size_t shards = 1;
};

void add_common(CLI::App* sub, Common& c, bool needs_out, const std::string& out_help) {
  sub->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  auto* o = sub->add_option("--out", c.out, out_help);
  if (needs_out) o->required();
  sub->add_option("--shards", c.shards, "Worker threads; never changes results")->capture_default_str()->check(CLI::PositiveNumber);
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  Common common;
  std::size_t entities = 5000;
  std::size_t sessions = 20000;
  BehaviorConfig behavior;
  std::size_t lines = 10000;
};

int run_gen_log(const SynthOpts& o) {
  ensure_dir(o.common.out);
  json cfg{{"entities", o.entities}, {"sessions", o.sessions}, {"typo_rate", o.behavior.typo_rate},
           {"transfer_share", o.behavior.transfer_share}, {"self_correct_share", o.behavior.self_correct_share},
           {"case_noise", o.behavior.case_noise}, {"seed", o.common.seed}};
  RunManifest man(g_command_line, cfg);
  man.seed("seed", o.common.seed);
  const Gazetteer gaz = generate_gazetteer(o.common.seed, o.entities);
  const SyntheticLog log = generate_log(gaz, TypoChannel{}, o.behavior, o.sessions, o.common.seed, o.common.shards);
  const std::string sessions = join(o.common.out, "sessions.jsonl");
  const std::string truth = join(o.common.out, "ground_truth.tsv");
  const std::string gazetteer = join(o.common.out, "gazetteer.txt");
  write_sessions(log.sessions, sessions);
  write_ground_truth(log.truth, truth);
  write_gazetteer(gaz, gazetteer);
  for (const auto& p : {sessions, truth, gazetteer}) man.output(p);
  man.write(join(o.common.out, "manifest.json"));
  std::cerr << "wrote " << log.sessions.size() << " sessions, " << log.truth.size() << " ground-truth pairs to " << o.common.out
            << "\n";
  return kOk;
}

int run_general_text(const SynthOpts& o) {
  RunManifest man(g_command_line, json{{"lines", o.lines}, {"seed", o.common.seed}});
  man.seed("seed", o.common.seed);
  std::string text;
  for (const auto& l : generate_general_text(o.common.seed, o.lines)) text += l + "\n";
  write_text(o.common.out, text);
  man.output(o.common.out);
  man.write(o.common.out + ".manifest.json");
  return kOk;
}

// ---------------------------------------------------------------------------
// normalize

int run_normalize(bool strip_diacritics) {
  NormalizerOptions opts;
  opts.strip_diacritics = strip_diacritics;
  std::string line;
  while (std::getline(std::cin, line)) std::cout << normalize_text(line, opts) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// mine

struct MineOpts {
  Common common;
  std::string sessions;
  double theta = 0.5;
  std::vector<std::string> band;
};

int run_mine(const MineOpts& o) {
  MinerConfig cfg;
  cfg.theta = o.theta;
  cfg.shards = o.common.shards;
  for (const auto& kv : o.band) cfg.band.set(kv);
  cfg.band.validate();
  json jcfg{{"theta", cfg.theta},
            {"band",
             {{"min_dist", cfg.band.min_dist}, {"max_rel_dist", cfg.band.max_rel_dist}, {"min_lcs_rel", cfg.band.min_lcs_rel},
              {"min_len_rel", cfg.band.min_len_rel}}}};
  RunManifest man(g_command_line, jcfg);
  man.input(o.sessions);
  const auto res = mine_sessions(read_sessions(o.sessions), cfg);
  if (const auto dir = fs::path(o.common.out).parent_path(); !dir.empty()) ensure_dir(dir.string());
  write_tsv(res.labeled, o.common.out);
  man.output(o.common.out);
  man.write(o.common.out + ".manifest.json");
  std::cerr << "mined " << res.calibrated.size() << " pairs; " << res.labeled.size() << " labeled rows ("
            << count_misspelt(res.labeled) << " misspelt)\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// split

struct SplitOpts {
  Common common;
  std::string in;
  SplitSpec spec;
};

int run_split(SplitOpts o) {
  o.spec.seed = o.common.seed;
  ensure_dir(o.common.out);
  RunManifest man(g_command_line, json{{"train", o.spec.train_n}, {"dev", o.spec.dev_n}, {"test", o.spec.test_n},
                                       {"ratio", o.spec.misspell_ratio}, {"seed", o.spec.seed}});
  man.seed("seed", o.spec.seed);
  man.input(o.in);
  const Splits s = split(read_tsv(o.in), o.spec);
  const std::pair<const char*, const std::vector<LabeledExample>*> parts[] = {
      {"train.tsv", &s.train}, {"dev.tsv", &s.dev}, {"test.tsv", &s.test}};
  for (const auto& [name, rows] : parts) {
    write_tsv(*rows, join(o.common.out, name));
    man.output(join(o.common.out, name));
  }
  man.write(join(o.common.out, "manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------------------
// build-vocab

struct VocabOpts {
  Common common;
  std::string kind = "subword";
  std::vector<std::string> in;
  std::size_t size = 4000;
  std::size_t merge_cap = 100000;
};

int run_build_vocab(const VocabOpts& o) {
  RunManifest man(g_command_line, json{{"kind", o.kind}, {"size", o.size}, {"merge_cap", o.merge_cap}});
  std::vector<std::string> corpus;
  for (const auto& p : o.in) {
    man.input(p);
    auto t = read_texts(p);
    corpus.insert(corpus.end(), t.begin(), t.end());
  }
  if (corpus.empty()) throw DataError("build-vocab: input corpus is empty");
  const Vocabulary v = o.kind == "word" ? build_word_vocab(corpus, o.size) : build_subword_vocab(corpus, o.size, o.merge_cap);
  v.save(o.common.out);
  man.output(o.common.out);
  man.write(o.common.out + ".manifest.json");
  std::cerr << "vocabulary: " << v.size() << " tokens, sha256 " << v.content_hash() << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// pretrain

struct PretrainOpts {
  Common common;
  std::vector<std::string> corpus;
  std::string dev;
  std::string vocab;
  std::string preset = "slim";
  TrainConfig train{Task::MlmPretrain, 10, 32, 5e-4, 42};
};

int run_pretrain(PretrainOpts o) {
  o.train.seed = o.common.seed;
  ensure_dir(o.common.out);
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  const EncoderConfig ecfg = encoder_preset(o.preset, vocab.size());
  RunManifest man(g_command_line, json{{"encoder", to_json(ecfg)}, {"train", to_json(o.train)}});
  man.seed("seed", o.train.seed);
  man.input(o.vocab);
  std::vector<std::string> texts;
  for (const auto& p : o.corpus) {
    man.input(p);
    auto t = read_texts(p);
    texts.insert(texts.end(), t.begin(), t.end());
  }
  man.input(o.dev);
  auto enc = [&](const std::vector<std::string>& src) {
    std::vector<std::vector<TokenId>> ids;
    for (const auto& t : src) ids.push_back(encode(normalize_text(t), vocab, ecfg.max_len));
    return ids;
  };
  MlmModel model(ecfg, o.train.seed);
  TrainHistory hist = train_mlm(model, o.train, enc(texts), enc(read_texts(o.dev)), progress("pretrain"));
  hist.label = "mlm_pretrain_" + o.preset;
  const std::string ckpt = join(o.common.out, "encoder.ckpt");
  const std::string hpath = join(o.common.out, "history.jsonl");
  save_mlm(ckpt, model, vocab, o.vocab);
  write_text(hpath, history_jsonl(hist));
  man.output(ckpt);
  man.output(hpath);
  man.write(join(o.common.out, "manifest.json"));
  return kOk;
}

// ---------------------------------------------------------------------------
// finetune

struct FinetuneOpts {
  Common common;
  std::string model = "encoder";
  std::string train_path, dev_path, vocab;
  std::string init;
  std::string preset = "slim";
  std::string pooling = "last_layer_cls";
  bool freeze_encoder = false;
  double head_dropout = 0.3;
  std::string embeddings;
  bool freeze_embeddings = false;
  std::size_t embed_dim = 50, hidden_dim = 50;
  std::string label;
  TrainConfig train{Task::Finetune, 4, 32, 3e-5, 42};
};

int run_finetune(FinetuneOpts o) {
  o.train.seed = o.common.seed;
  ensure_dir(o.common.out);
  const Vocabulary vocab = Vocabulary::load(o.vocab);
  RunManifest man(g_command_line, json{});
  man.seed("seed", o.train.seed);
  man.input(o.vocab);
  man.input(o.train_path);
  man.input(o.dev_path);
  const auto train_rows = read_tsv(o.train_path);
  const auto dev_rows = read_tsv(o.dev_path);
  const std::string ckpt = join(o.common.out, "model.ckpt");
  const std::string vocab_path = o.vocab;
  TrainHistory hist;
  json cfg;

  if (o.model == "lstm") {
    o.train.task = Task::Lstm;
    LstmConfig lc;
    lc.vocab_size = vocab.size();
    lc.embed_dim = o.embed_dim;
    lc.hidden_dim = o.hidden_dim;
    lc.embeddings_trainable = !o.freeze_embeddings;
    lc.external_embeddings = o.embeddings;
    std::optional<ExternalEmbeddings> ext;
    if (!o.embeddings.empty()) {
      man.input(o.embeddings);
      ext = load_external_embeddings(o.embeddings, vocab, o.train.seed);
      lc.embed_dim = ext->dim;
      std::cerr << "embeddings: " << ext->found << " of " << vocab.size() << " rows found in " << o.embeddings << "\n";
    }
    LstmClassifier model(lc, o.train.seed);
    if (ext) model.set_embeddings(ext->table);
    cfg = json{{"lstm", to_json(lc)}, {"train", to_json(o.train)}};
    hist = train_classifier(model, o.train, encode_examples(train_rows, vocab, kLstmMaxLen),
                            encode_examples(dev_rows, vocab, kLstmMaxLen), progress("lstm"));
    save_lstm(ckpt, model, vocab, vocab_path);
    hist.label = o.label.empty() ? "lstm" : o.label;
  } else if (o.model == "encoder") {
    EncoderConfig ecfg = encoder_preset(o.preset, vocab.size());
    std::optional<Checkpoint> init;
    if (!o.init.empty()) {
      man.input(o.init);
      init = load_checkpoint(o.init);
      require_vocab(*init, vocab.content_hash());
      // The checkpoint decides the architecture; a preset mismatch surfaces as a shape error.
      const EncoderConfig stored = encoder_config_from_json(init->arch == "encoder" ? init->config : init->config.at("encoder"));
      if (stored.n_layers != ecfg.n_layers)
        throw ShapeError("--init " + o.init + " holds a " + std::to_string(stored.n_layers) + "-layer encoder, preset '" +
                         o.preset + "' has " + std::to_string(ecfg.n_layers));
      ecfg = stored;
    }
    const HeadConfig head{pooling_from_string(o.pooling), o.head_dropout, o.freeze_encoder};
    EncoderClassifier model(ecfg, head, o.train.seed);
    if (init) model.params().copy_from(init->params, "encoder.");
    cfg = json{{"encoder", to_json(ecfg)}, {"head", to_json(head)}, {"train", to_json(o.train)}};
    hist = train_classifier(model, o.train, encode_examples(train_rows, vocab, ecfg.max_len),
                            encode_examples(dev_rows, vocab, ecfg.max_len), progress("finetune"));
    save_encoder_classifier(ckpt, model, vocab, vocab_path);
    hist.label = !o.label.empty() ? o.label
                                  : std::string("encoder_") + o.preset + (init ? "_pretrained" : "_supervised") +
                                        (o.freeze_encoder ? "_frozen" : "") + "_" + o.pooling;
  } else {
    throw ConfigError("--model must be lstm or encoder");
  }
  const std::string hpath = join(o.common.out, "history.jsonl");
  write_text(hpath, history_jsonl(hist));
  man.output(ckpt);
  man.output(hpath);
  man.set_config(cfg);
  man.write(join(o.common.out, "manifest.json"));
  std::cerr << "best epoch " << hist.best_epoch << ": dev macro F1 " << headline_f1(*hist.best().dev) << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// evaluate / predict / report: results go to stdout, or to --out with a manifest

void emit(const std::string& text, const std::string& out, RunManifest& man) {
  if (out.empty()) {
    std::cout << text;
    return;
  }
  write_text(out, text);
  man.output(out);
  man.write(out + ".manifest.json");
}

std::optional<std::string> opt_path(const std::string& s) { return s.empty() ? std::nullopt : std::optional<std::string>(s); }

int run_evaluate(const std::string& model, const std::string& data, const std::string& vocab, const std::string& out) {
  RunManifest man(g_command_line, json{{"threshold", 0.5}});
  man.input(model);
  man.input(data);
  const auto clf = LoadedClassifier::load(model, opt_path(vocab));
  emit(to_json(clf.evaluate(read_tsv(data))).dump(2) + "\n", out, man);
  return kOk;
}

int run_predict(const std::string& model, const std::vector<std::string>& queries, const std::string& vocab,
                const std::string& out) {
  RunManifest man(g_command_line, json{{"threshold", 0.5}});
  man.input(model);
  const auto clf = LoadedClassifier::load(model, opt_path(vocab));
  std::ostringstream ss;
  auto one = [&](const std::string& q) {
    const Prediction p = clf.predict(q);
    ss << q << "\t" << (p.is_misspelt ? "True" : "False") << "\t" << std::fixed << std::setprecision(6) << p.probability << "\n";
  };
  if (!queries.empty()) {
    for (const auto& q : queries) one(q);
  } else {
    std::string line;
    while (std::getline(std::cin, line))
      if (!line.empty()) one(line);
  }
  emit(ss.str(), out, man);
  return kOk;
}

int run_report(const std::vector<std::string>& paths, const std::string& out) {
  struct Row {
    std::string label;
    std::size_t best_epoch;
    double macro, f1_1;
  };
  RunManifest man(g_command_line, json{{"sort", "macro_f1_ascending"}});
  std::vector<Row> rows;
  for (const auto& p : paths) {
    man.input(p);
    const TrainHistory h = history_from_jsonl(read_all(p), p);
    if (!h.best().dev) throw DataError(p + ": not a classifier history (no dev metrics)");
    std::string label = h.label.empty() ? fs::path(p).parent_path().filename().string() : h.label;
    rows.push_back({label, h.best_epoch, headline_f1(*h.best().dev), h.best().dev->misspelt.f1});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.macro < b.macro; });
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::ostringstream ss;
  ss << std::left << std::setw(static_cast<int>(w)) << "Model" << "  Best epoch  Macro F1  F1 (label 1)\n";
  ss << std::string(w, '-') << "  ----------  --------  ------------\n";
  for (const auto& r : rows)
    ss << std::left << std::setw(static_cast<int>(w)) << r.label << "  " << std::right << std::setw(10) << r.best_epoch << "  "
       << std::fixed << std::setprecision(4) << std::setw(8) << r.macro << "  " << std::setw(12) << r.f1_1 << "\n";
  emit(ss.str(), out, man);
  return kOk;
}

struct TrainFlags {
  CLI::Option* epochs;
  CLI::Option* lr;
};

TrainFlags add_train_options(CLI::App* sub, TrainConfig& t, const std::string& lr_help) {
  return {sub->add_option("--epochs", t.max_epochs, "Maximum epochs")->check(CLI::PositiveNumber),
          (sub->add_option("--batch-size", t.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber),
           sub->add_option("--lr", t.lr, lr_help)->check(CLI::PositiveNumber))};
}

/// Desk preset for whichever of epochs / lr the user left unset.
void apply_preset(TrainConfig& t, const TrainFlags& flags, const TrainConfig& preset) {
  if (flags.epochs->count() == 0) t.max_epochs = preset.max_epochs;
  if (flags.lr->count() == 0) t.lr = preset.lr;
}

}  // namespace

int main(int argc, char** argv) {
  for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

  CLI::App app{"Misspelling detection toolkit for map search queries"};
  app.set_version_flag("--version", MAPSPELL_VERSION);
  app.require_subcommand(1);
  // One TOML file can configure every stage: [finetune], [pretrain], [synth.gen-log], ...
  app.set_config("--config", "", "TOML option defaults, one [section] per subcommand; flags override it");
  app.fallthrough();

  SynthOpts synth;
  auto* synth_cmd = app.add_subcommand("synth", "Synthetic data generation");
  synth_cmd->require_subcommand(1);
  auto* gen_log = synth_cmd->add_subcommand("gen-log", "Generate a keystroke-session log with injected misspellings");
  add_common(gen_log, synth.common, true, "Output directory");
  gen_log->add_option("--entities", synth.entities, "Gazetteer size")->capture_default_str()->check(CLI::PositiveNumber);
  gen_log->add_option("--sessions", synth.sessions, "Number of sessions")->capture_default_str()->check(CLI::PositiveNumber);
  gen_log->add_option("--typo-rate", synth.behavior.typo_rate, "Share of sessions carrying a misspelling")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen_log->add_option("--transfer-share", synth.behavior.transfer_share, "Share of typo sessions auto-corrected by the system")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen_log->add_option("--self-correct-share", synth.behavior.self_correct_share, "Share of the rest that backspace and retype")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen_log->add_option("--case-noise", synth.behavior.case_noise, "Share of sessions typed capitalized")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));
  auto* gen_text = synth_cmd->add_subcommand("general-text", "Generate general-domain filler text, one line each");
  add_common(gen_text, synth.common, true, "Output file");
  gen_text->add_option("--lines", synth.lines, "Number of lines")->capture_default_str()->check(CLI::PositiveNumber);

  bool strip_diacritics = false;
  auto* norm_cmd = app.add_subcommand("normalize", "Normalize queries from stdin, one per line");
  norm_cmd->add_flag("--strip-diacritics", strip_diacritics, "Also remove combining accents");

  MineOpts mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine misspelt -> correction pairs from a session log");
  add_common(mine_cmd, mine.common, true, "Labeled TSV output");
  mine_cmd->add_option("--sessions", mine.sessions, "Session JSON-lines file")->required();
  mine_cmd->add_option("--theta", mine.theta, "Calibration threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  mine_cmd->add_option("--band", mine.band, "Distance band knob key=value (repeatable)");

  SplitOpts sp;
  auto* split_cmd = app.add_subcommand("split", "Disjoint train/dev/test split at a fixed misspelling ratio");
  add_common(split_cmd, sp.common, true, "Output directory");
  split_cmd->add_option("--in", sp.in, "Labeled TSV")->required();
  split_cmd->add_option("--train", sp.spec.train_n, "Train size")->required();
  split_cmd->add_option("--dev", sp.spec.dev_n, "Dev size")->required();
  split_cmd->add_option("--test", sp.spec.test_n, "Test size")->required();
  split_cmd->add_option("--ratio", sp.spec.misspell_ratio, "Misspelt fraction per split")
      ->capture_default_str()->check(CLI::Range(0.0, 1.0));

  VocabOpts vo;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a word or subword vocabulary");
  add_common(vocab_cmd, vo.common, true, "Vocabulary file");
  vocab_cmd->add_option("--kind", vo.kind, "word or subword")->capture_default_str()->check(CLI::IsMember({"word", "subword"}));
  vocab_cmd->add_option("--in", vo.in, "Corpus files (.tsv uses the query column)")->required();
  vocab_cmd->add_option("--size", vo.size, "Maximum vocabulary size")->capture_default_str();
  vocab_cmd->add_option("--merge-cap", vo.merge_cap, "Maximum subword merges")->capture_default_str();

  PretrainOpts pt;
  auto* pre_cmd = app.add_subcommand("pretrain", "Masked-language-model pre-training of the encoder");
  add_common(pre_cmd, pt.common, true, "Output directory");
  pre_cmd->add_option("--corpus", pt.corpus, "Training text files (.tsv uses the query column)")->required();
  pre_cmd->add_option("--dev", pt.dev, "Held-out text file for best-epoch selection")->required();
  pre_cmd->add_option("--vocab", pt.vocab, "Subword vocabulary")->required();
  pre_cmd->add_option("--preset", pt.preset, "Encoder size: full or slim")->capture_default_str()->check(CLI::IsMember({"full", "slim"}));
  const TrainFlags pre_flags = add_train_options(pre_cmd, pt.train, "Adam learning rate (constant; default: desk preset)");

  FinetuneOpts ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Supervised training of a misspelling classifier");
  add_common(ft_cmd, ft.common, true, "Output directory");
  ft_cmd->add_option("--model", ft.model, "lstm or encoder")->capture_default_str()->check(CLI::IsMember({"lstm", "encoder"}));
  ft_cmd->add_option("--train", ft.train_path, "Training TSV")->required();
  ft_cmd->add_option("--dev", ft.dev_path, "Dev TSV")->required();
  ft_cmd->add_option("--vocab", ft.vocab, "Vocabulary (word for lstm, subword for encoder)")->required();
  ft_cmd->add_option("--init", ft.init, "Pre-trained encoder checkpoint");
  ft_cmd->add_option("--preset", ft.preset, "Encoder size: full or slim")->capture_default_str()->check(CLI::IsMember({"full", "slim"}));
  ft_cmd->add_option("--pooling", ft.pooling, "last_layer_cls or avg_last4_cls")
      ->capture_default_str()->check(CLI::IsMember({"last_layer_cls", "avg_last4_cls"}));
  ft_cmd->add_flag("--freeze-encoder", ft.freeze_encoder, "Train the head only");
  ft_cmd->add_option("--head-dropout", ft.head_dropout, "Dropout before the classification layer")->capture_default_str();
  ft_cmd->add_option("--embeddings", ft.embeddings, "External word vectors for the LSTM (word v1 ... vd)");
  ft_cmd->add_flag("--freeze-embeddings", ft.freeze_embeddings, "Keep LSTM embeddings fixed");
  ft_cmd->add_option("--embed-dim", ft.embed_dim, "LSTM embedding size")->capture_default_str();
  ft_cmd->add_option("--hidden-dim", ft.hidden_dim, "LSTM hidden size")->capture_default_str();
  ft_cmd->add_option("--label", ft.label, "Name used by `report`");
  const TrainFlags ft_flags =
      add_train_options(ft_cmd, ft.train, "Adam learning rate (constant; default: desk preset for the model)");

  std::string model, data, vocab_override, result_out;
  std::vector<std::string> queries, histories;
  auto reader = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
      sub->add_option("--out", result_out, "Write the result here (with a manifest) instead of stdout");
    return sub;
  };
  auto* eval_cmd = reader("evaluate", "Score a checkpoint on a labeled TSV; JSON report");
  eval_cmd->add_option("--model", model, "Classifier checkpoint")->required();
  eval_cmd->add_option("--data", data, "Labeled TSV")->required();
  eval_cmd->add_option("--vocab", vocab_override, "Vocabulary (default: path stored in the checkpoint)");
  auto* pred_cmd = reader("predict", "Classify queries (arguments, or stdin lines): query, is_misspelt, probability");
  pred_cmd->add_option("--model", model, "Classifier checkpoint")->required();
  pred_cmd->add_option("--query", queries, "Query text (repeatable)");
  pred_cmd->add_option("--vocab", vocab_override, "Vocabulary (default: path stored in the checkpoint)");
  auto* report_cmd = reader("report", "Compare best epochs across training histories, sorted by macro F1");
  report_cmd->add_option("histories", histories, "history.jsonl files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const DeskModelConfig desk;
  apply_preset(pt.train, pre_flags, desk.pretrain);
  apply_preset(ft.train, ft_flags,
               ft.model == "lstm" ? desk.lstm_train : (ft.freeze_encoder ? desk.frozen : desk.finetune));

  try {
    if (*gen_log) return run_gen_log(synth);
    if (*gen_text) return run_general_text(synth);
    if (*norm_cmd) return run_normalize(strip_diacritics);
    if (*mine_cmd) return run_mine(mine);
    if (*split_cmd) return run_split(sp);
    if (*vocab_cmd) return run_build_vocab(vo);
    if (*pre_cmd) return run_pretrain(pt);
    if (*ft_cmd) return run_finetune(ft);
    if (*eval_cmd) return run_evaluate(model, data, vocab_override, result_out);
    if (*pred_cmd) return run_predict(model, queries, vocab_override, result_out);
    if (*report_cmd) return run_report(histories, result_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const HashMismatch& e) {
    std::cerr << "hash mismatch: " << e.what() << "\n";
    return kHash;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
