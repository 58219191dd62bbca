#include "app.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "onlstm/data/agreement.hpp"
#include "onlstm/data/grammar.hpp"
#include "onlstm/data/logic.hpp"
#include "onlstm/data/vocab.hpp"
#include "onlstm/errors.hpp"
#include "onlstm/io/files.hpp"
#include "onlstm/models/checkpoint.hpp"
#include "onlstm/parsing/induction.hpp"
#include "onlstm/training/trainer.hpp"

namespace onlstm::app {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

constexpr const char* kVersion = "1.0.0";

class MissingFile : public std::runtime_error {
 public:
  explicit MissingFile(const fs::path& path) : std::runtime_error("no such file: " + path.string()) {}
};

class CellMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Config files are plain "key = value" lines; keys belong to whichever
// subcommand is being run.
class SubcommandConfig : public CLI::ConfigINI {
 public:
  explicit SubcommandConfig(const CLI::App* app) : app_(app) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    auto items = CLI::ConfigINI::from_config(input);
    const auto subs = app_->get_subcommands();
    if (subs.empty()) return items;
    for (auto& item : items) {
      if (item.parents.empty()) item.parents = {subs.front()->get_name()};
    }
    return items;
  }

 private:
  const CLI::App* app_;
};

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

fs::path require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw MissingFile(path);
  return path;
}

fs::path prepare_out(const std::string& dir) {
  fs::create_directories(dir);
  return dir;
}

std::string join(const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  return text;
}

// Everything needed to replay a run: argv, the merged option values, seed and
// versions.
void write_manifest(const fs::path& out_dir, const CLI::App& sub, const std::vector<std::string>& args,
                    const std::vector<std::string>& outputs) {
  ordered_json j;
  j["subcommand"] = sub.get_name();
  j["argv"] = args;
  ordered_json config = ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (opt->get_expected_max() > 1 || r.size() > 1) {
        config[name] = r;
      } else {
        config[name] = r.empty() ? std::string("true") : r.front();
      }
    } else {
      config[name] = opt->get_default_str();
    }
  }
  j["config"] = config;
  j["outputs"] = outputs;
  j["versions"] = {{"onlstm", kVersion},
                   {"checkpoint_format", kCheckpointVersion},
                   {"generator_format", kGeneratorVersion},
                   {"compiler", __VERSION__}};
  io::atomic_write(out_dir / "manifest.json", j.dump(2) + "\n");
}

std::vector<std::size_t> check_hidden(const std::vector<std::size_t>& hidden) {
  if (hidden.empty()) throw ConfigError("--hidden needs at least one layer size");
  return hidden;
}

fs::path vocab_path(const std::string& flag, const fs::path& checkpoint) {
  return require_file(flag.empty() ? (checkpoint.parent_path() / "vocab.txt").string() : flag);
}

void check_cell(const std::string& wanted, CellKind actual, const fs::path& checkpoint) {
  if (!wanted.empty() && parse_cell_kind(wanted) != actual) {
    throw CellMismatch(checkpoint.string() + " holds a " + std::string(to_string(actual)) + " model, --cell " +
                       wanted + " was requested");
  }
}

LanguageModel load_lm(const fs::path& path, const std::string& cell) {
  if (checkpoint_kind(path) != "lm") throw CheckpointError(path.string() + " is not a language model checkpoint");
  LanguageModel model = load_language_model(path);
  check_cell(cell, model.config().cell, path);
  return model;
}

std::vector<std::vector<int>> encode_all(const Vocab& vocab, const std::vector<Sentence>& sentences) {
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(vocab.encode(s));
  return out;
}

struct ModelFlags {
  std::string cell = "onlstm";
  std::size_t embed = 64;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t chunk = 8;
  DropoutRates dropout;
};

void add_model_flags(CLI::App* sub, ModelFlags& m) {
  sub->add_option("--cell", m.cell, "onlstm or lstm")->check(CLI::IsMember({"onlstm", "lstm"}));
  sub->add_option("--embed", m.embed, "embedding size")->check(CLI::PositiveNumber);
  sub->add_option("--hidden", m.hidden, "hidden size per layer, comma separated")->delimiter(',');
  sub->add_option("--chunk", m.chunk, "chunk factor C")->check(CLI::PositiveNumber);
  sub->add_option("--dropout-input", m.dropout.input);
  sub->add_option("--dropout-hidden", m.dropout.hidden);
  sub->add_option("--dropout-output", m.dropout.output);
  sub->add_option("--dropout-weight", m.dropout.weight);
}

void add_train_flags(CLI::App* sub, TrainConfig& t) {
  sub->add_option("--epochs", t.epochs);
  sub->add_option("--lr", t.learning_rate, "Adam learning rate");
  sub->add_option("--clip", t.clip, "gradient norm threshold");
  sub->add_option("--batch", t.batch_size);
  sub->add_option("--patience", t.patience, "epochs without validation improvement, 0 disables");
}

// Seeds for the model initializer and the trainer, both derived from --seed.
struct Seeds {
  std::uint64_t init;
  std::uint64_t train;
};
Seeds split_seed(std::uint64_t seed) {
  Rng root(seed);
  const std::uint64_t init = root.next();
  return {init, root.next()};
}

// ---- generation ----

struct GenCorpus {
  std::size_t count = 5000;
  std::size_t valid = 500;
  std::size_t test = 500;
  std::string grammar;
  CfgOptions cfg;
};

void run_gen_corpus(const GenCorpus& o, std::uint64_t seed, const fs::path& out, std::vector<std::string>& outputs) {
  const Grammar grammar = o.grammar.empty() ? Grammar::default_grammar()
                                            : Grammar::parse(io::read_file(require_file(o.grammar)));
  const auto samples = generate_cfg_corpus(grammar, o.count + o.valid + o.test, o.cfg, seed);
  std::size_t begin = 0;
  for (const auto& [name, n] : {std::pair{"train", o.count}, std::pair{"valid", o.valid}, std::pair{"test", o.test}}) {
    if (n == 0) continue;
    std::vector<Sentence> tokens;
    std::vector<std::string> trees;
    for (std::size_t k = begin; k < begin + n; ++k) {
      tokens.push_back(samples[k].tokens);
      trees.push_back(write_labeled(samples[k].gold));
    }
    begin += n;
    const Manifest m{std::string("gen-corpus/") + name, n, seed};
    write_corpus(out / (std::string(name) + ".txt"), tokens, m);
    write_lines(out / (std::string(name) + ".trees"), trees, &m);
    outputs.push_back(std::string(name) + ".txt");
    outputs.push_back(std::string(name) + ".trees");
  }
  io::atomic_write(out / "grammar.txt", grammar.str());
  outputs.push_back("grammar.txt");
}

void run_gen_logic(LogicConfig c, std::uint64_t seed, const fs::path& out, std::vector<std::string>& outputs,
                   std::ostream& stdout_) {
  c.seed = seed;
  const LogicDataset d = logic_generate(c);
  write_logic(out / "train.tsv", d.train, {"gen-logic/train", d.train.size(), seed});
  write_logic(out / "valid.tsv", d.valid, {"gen-logic/valid", d.valid.size(), seed});
  std::vector<LogicSample> test;
  for (const auto& [bucket, samples] : d.test) test.insert(test.end(), samples.begin(), samples.end());
  write_logic(out / "test.tsv", test, {"gen-logic/test", test.size(), seed});
  outputs.insert(outputs.end(), {"train.tsv", "valid.tsv", "test.tsv"});
  for (const auto& split : d.cap_lifted) stdout_ << "cap_lifted=" << split << "\n";
}

void run_gen_pairs(std::size_t count, std::size_t lm_count, std::uint64_t seed, const fs::path& out,
                   std::vector<std::string>& outputs) {
  write_pairs(out / "pairs.tsv", generate_agreement_pairs(count, seed), {"gen-pairs", count, seed});
  outputs.push_back("pairs.tsv");
  if (lm_count > 0) {
    // A different stream so the training sentences are not the test prefixes.
    Rng rng(seed);
    rng.next();
    const std::uint64_t corpus_seed = rng.next();
    write_corpus(out / "corpus.txt", generate_agreement_corpus(lm_count, corpus_seed),
                 {"gen-pairs/corpus", lm_count, corpus_seed});
    outputs.push_back("corpus.txt");
  }
}

// ---- language model ----

struct TrainLm {
  std::string train;
  std::string valid;
  std::size_t min_count = 1;
  bool untied = false;
  bool save_init = false;
  ModelFlags model;
  TrainConfig train_config;
};

void run_train_lm(const TrainLm& o, std::uint64_t seed, const fs::path& out, std::vector<std::string>& outputs,
                  std::ostream& stdout_) {
  const auto train = read_corpus(require_file(o.train));
  const auto valid = o.valid.empty() ? std::vector<Sentence>{} : read_corpus(require_file(o.valid));
  if (train.empty()) throw DataError(o.train + " holds no sentences");
  const Vocab vocab = Vocab::build(train, o.min_count);

  LanguageModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_size = o.model.embed;
  cfg.hidden_sizes = check_hidden(o.model.hidden);
  cfg.chunk_factor = o.model.chunk;
  cfg.cell = parse_cell_kind(o.model.cell);
  cfg.tie_weights = !o.untied;
  cfg.dropout = o.model.dropout;
  cfg.validate();
  TrainConfig tc = o.train_config;
  const Seeds seeds = split_seed(seed);
  tc.seed = seeds.train;
  tc.validate();

  LanguageModel model(cfg);
  Rng init(seeds.init);
  model.initialize(init);
  vocab.save(out / "vocab.txt");
  outputs.push_back("vocab.txt");
  if (o.save_init) {
    save_model(model, out / "init.ckpt");
    outputs.push_back("init.ckpt");
  }

  std::vector<std::string> log;
  const TrainHistory history =
      train_language_model(model, encode_all(vocab, train), encode_all(vocab, valid), tc, [&](const EpochRecord& r) {
        for (auto& line : metrics_lines(r, true)) log.push_back(std::move(line));
        io::atomic_write(out / "metrics.log", join(log));
      });
  save_model(model, out / "model.ckpt");
  outputs.insert(outputs.end(), {"model.ckpt", "metrics.log"});

  stdout_ << "vocab_size=" << vocab.size() << "\n";
  stdout_ << "epochs=" << history.epochs.size() << "\n";
  stdout_ << "best_epoch=" << history.best_epoch << "\n";
  stdout_ << "train_loss=" << num(history.epochs.at(history.best_epoch - 1).stats.train_loss) << "\n";
  if (!valid.empty()) stdout_ << "valid_perplexity=" << num(perplexity(model, encode_all(vocab, valid))) << "\n";
}

struct Parse {
  std::string checkpoint;
  std::string vocab;
  std::string input;
  std::string layer;
  std::string cell;
};

void run_parse(const Parse& o, const fs::path& out, std::vector<std::string>& outputs) {
  const fs::path ckpt = require_file(o.checkpoint);
  const LanguageModel model = load_lm(ckpt, o.cell);
  if (model.config().cell != CellKind::kOnLstm) {
    throw CellMismatch(ckpt.string() + " holds an lstm model; parsing needs onlstm split estimates");
  }
  const Vocab vocab = Vocab::load(vocab_path(o.vocab, ckpt));
  const auto lines = io::read_lines(require_file(o.input));

  // Blank and comment lines pass through so output line k answers input line k.
  std::vector<std::optional<std::size_t>> slot(lines.size());
  std::vector<Sentence> tokens;
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const auto first = lines[k].find_first_not_of(" \t");
    if (first == std::string::npos || lines[k][first] == '#') continue;
    slot[k] = tokens.size();
    tokens.push_back(lines[k][first] == '(' ? to_sentence(parse_bracket_tree(lines[k], BracketFormat::kAuto, k + 1)).tokens
                                            : split_tokens(lines[k]));
  }
  const auto ids = encode_all(vocab, tokens);

  const std::size_t layers = model.encoder().layer_count();
  std::vector<std::size_t> chosen;
  if (o.layer.empty()) {
    chosen.push_back(default_parse_layer(model));
  } else if (o.layer == "all") {
    for (std::size_t l = 0; l < layers; ++l) chosen.push_back(l);
  } else {
    std::size_t l = 0;
    try {
      std::size_t used = 0;
      l = std::stoul(o.layer, &used);
      if (used != o.layer.size()) throw std::invalid_argument(o.layer);
    } catch (const std::logic_error&) {
      throw ConfigError("--layer must be a layer index or 'all', got '" + o.layer + "'");
    }
    if (l >= layers) {
      throw ConfigError("--layer " + o.layer + " but the model has " + std::to_string(layers) + " layers");
    }
    chosen.push_back(l);
  }

  for (std::size_t layer : chosen) {
    const auto trees = parse_corpus(model, layer, ids);
    std::string text;
    for (std::size_t k = 0; k < lines.size(); ++k) {
      text += slot[k] ? write_bracketed(trees[*slot[k]], tokens[*slot[k]]) : lines[k];
      text += "\n";
    }
    const std::string name = o.layer == "all" ? "trees.layer" + std::to_string(layer) + ".txt" : "trees.txt";
    io::atomic_write(out / name, text);
    outputs.push_back(name);
  }
}

struct EvalF1 {
  std::string pred;
  std::string gold;
  std::string baseline;
};

std::vector<std::string> run_eval_f1(const EvalF1& o, std::uint64_t seed) {
  const auto gold = read_bracketed_file(require_file(o.gold), BracketFormat::kAuto);
  std::vector<ParseTree> pred;
  if (!o.baseline.empty()) {
    const BaselineKind kind = parse_baseline_kind(o.baseline);
    Rng rng(seed);
    for (const auto& g : gold) pred.push_back(baseline_tree(kind, g.tokens.size(), rng.next()));
  } else {
    if (o.pred.empty()) throw ConfigError("eval-f1 needs --pred or --baseline");
    const auto predicted = read_bracketed_file(require_file(o.pred), BracketFormat::kAuto);
    if (predicted.size() != gold.size()) {
      throw AlignmentError(o.pred + " has " + std::to_string(predicted.size()) + " trees, " + o.gold + " has " +
                           std::to_string(gold.size()));
    }
    for (std::size_t k = 0; k < gold.size(); ++k) {
      if (predicted[k].tokens != gold[k].tokens) {
        throw AlignmentError("tree " + std::to_string(k + 1) + ": predicted and gold tokens differ");
      }
      pred.push_back(predicted[k].tree);
    }
  }
  std::vector<EvalSentence> corpus;
  for (const auto& g : gold) corpus.push_back({{}, g});
  const CorpusF1 r = score_trees(pred, corpus);
  std::vector<std::string> lines{"sentences=" + std::to_string(gold.size()), "precision=" + num(r.precision),
                                 "recall=" + num(r.recall), "f1=" + num(r.f1)};
  for (const auto& [label, acc] : r.per_label) {
    lines.push_back("label_accuracy." + label + "=" + num(acc.accuracy()));
    lines.push_back("label_count." + label + "=" + std::to_string(acc.total));
  }
  return lines;
}

struct ScorePairs {
  std::string checkpoint;
  std::string vocab;
  std::string pairs;
  std::string cell;
};

std::vector<std::string> run_score_pairs(const ScorePairs& o) {
  const fs::path ckpt = require_file(o.checkpoint);
  const LanguageModel model = load_lm(ckpt, o.cell);
  const Vocab vocab = Vocab::load(vocab_path(o.vocab, ckpt));
  const auto tagged = read_pairs(require_file(o.pairs));
  if (tagged.empty()) throw DataError(o.pairs + " holds no pairs");
  std::vector<MinimalPair> pairs;
  for (const auto& p : tagged) pairs.push_back({vocab.encode(p.grammatical), vocab.encode(p.ungrammatical)});
  const auto scores = score_pair_list(model, pairs);
  std::map<std::string, std::pair<std::size_t, std::size_t>> by;  // correct, total
  std::size_t correct = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    correct += scores[k].correct;
    auto& c = by[tagged[k].category];
    c.first += scores[k].correct;
    ++c.second;
  }
  std::vector<std::string> lines{"pairs=" + std::to_string(scores.size()),
                                 "accuracy=" + num(static_cast<double>(correct) / static_cast<double>(scores.size()))};
  for (const auto& [cat, c] : by) {
    lines.push_back("accuracy." + cat + "=" + num(static_cast<double>(c.first) / static_cast<double>(c.second)));
    lines.push_back("count." + cat + "=" + std::to_string(c.second));
  }
  return lines;
}

// ---- logic ----

std::vector<LabeledPair> to_pairs(const Vocab& vocab, const std::vector<LogicSample>& samples) {
  std::vector<LabeledPair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({vocab.encode(s.first), vocab.encode(s.second), static_cast<int>(s.label)});
  return out;
}

// One row per operator-count bucket, one accuracy column per model.
std::vector<std::string> bucket_table(const std::vector<std::pair<std::string, const InferenceClassifier*>>& models,
                                      const Vocab& vocab, const std::vector<LogicSample>& test) {
  std::map<std::size_t, std::vector<LogicSample>> buckets;
  for (const auto& s : test) buckets[s.bucket()].push_back(s);
  std::string header = "bucket\tcount";
  for (const auto& [name, m] : models) header += "\t" + name;
  std::vector<std::string> rows{header};
  for (const auto& [bucket, samples] : buckets) {
    std::string row = std::to_string(bucket) + "\t" + std::to_string(samples.size());
    const auto pairs = to_pairs(vocab, samples);
    for (const auto& [name, m] : models) row += "\t" + num(accuracy(*m, pairs));
    rows.push_back(row);
  }
  return rows;
}

struct TrainLogic {
  std::string data;
  std::vector<std::string> cells{"onlstm"};
  std::size_t mlp = 128;
  bool save_init = false;
  ModelFlags model;
  TrainConfig train_config;
};

std::vector<std::string> run_train_logic(const TrainLogic& o, std::uint64_t seed, const fs::path& out,
                                         std::vector<std::string>& outputs) {
  const fs::path dir = o.data;
  const auto train = read_logic(require_file((dir / "train.tsv").string()));
  const auto valid = read_logic(require_file((dir / "valid.tsv").string()));
  const auto test = read_logic(require_file((dir / "test.tsv").string()));
  if (train.empty()) throw DataError((dir / "train.tsv").string() + " holds no pairs");
  std::vector<Sentence> text;
  for (const auto& s : train) {
    text.push_back(s.first);
    text.push_back(s.second);
  }
  const Vocab vocab = Vocab::build(text);
  vocab.save(out / "vocab.txt");
  outputs.push_back("vocab.txt");
  const auto train_pairs = to_pairs(vocab, train);
  const auto valid_pairs = to_pairs(vocab, valid);

  std::vector<std::unique_ptr<InferenceClassifier>> trained;
  std::vector<std::pair<std::string, const InferenceClassifier*>> columns;
  for (const std::string& cell : o.cells) {
    ClassifierConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_size = o.model.embed;
    cfg.hidden_sizes = check_hidden(o.model.hidden);
    cfg.chunk_factor = o.model.chunk;
    cfg.cell = parse_cell_kind(cell);
    cfg.mlp_size = o.mlp;
    cfg.dropout = o.model.dropout;
    cfg.validate();
    TrainConfig tc = o.train_config;
    const Seeds seeds = split_seed(seed);
    tc.seed = seeds.train;
    tc.validate();

    auto clf = std::make_unique<InferenceClassifier>(cfg);
    Rng init(seeds.init);
    clf->initialize(init);
    if (o.save_init) {
      save_model(*clf, out / ("init-" + cell + ".ckpt"));
      outputs.push_back("init-" + cell + ".ckpt");
    }
    std::vector<std::string> log;
    const std::string log_name = cell + ".metrics.log";
    train_classifier(*clf, train_pairs, valid_pairs, tc, [&](const EpochRecord& r) {
      for (auto& line : metrics_lines(r, false)) log.push_back(std::move(line));
      io::atomic_write(out / log_name, join(log));
    });
    save_model(*clf, out / (cell + ".ckpt"));
    outputs.insert(outputs.end(), {cell + ".ckpt", log_name});
    columns.emplace_back(cell, clf.get());
    trained.push_back(std::move(clf));
  }
  const auto table = bucket_table(columns, vocab, test);
  io::atomic_write(out / "accuracy.tsv", join(table));
  outputs.push_back("accuracy.tsv");
  return table;
}

struct EvalLogic {
  std::vector<std::string> checkpoints;
  std::string vocab;
  std::string test;
  std::string cell;
};

std::vector<std::string> run_eval_logic(const EvalLogic& o) {
  if (o.checkpoints.empty()) throw ConfigError("eval-logic needs at least one --checkpoint");
  std::vector<std::unique_ptr<InferenceClassifier>> models;
  std::vector<std::pair<std::string, const InferenceClassifier*>> columns;
  for (const auto& path : o.checkpoints) {
    const fs::path ckpt = require_file(path);
    if (checkpoint_kind(ckpt) != "classifier") throw CheckpointError(path + " is not a classifier checkpoint");
    models.push_back(std::make_unique<InferenceClassifier>(load_classifier(ckpt)));
    check_cell(o.cell, models.back()->config().cell, ckpt);
    columns.emplace_back(ckpt.stem().string(), models.back().get());
  }
  const Vocab vocab = Vocab::load(vocab_path(o.vocab, o.checkpoints.front()));
  return bucket_table(columns, vocab, read_logic(require_file(o.test)));
}

// ---- gradient check ----

struct GradCheck {
  GradCheckOptions options;
  std::string cell = "onlstm";
  std::string fault;
  double fault_factor = 1.01;
};

const std::map<std::string, Primitive>& primitives() {
  static const std::map<std::string, Primitive> table{
      {"matmul", Primitive::kMatmul},   {"add", Primitive::kAdd},
      {"mul", Primitive::kMul},         {"sigmoid", Primitive::kSigmoid},
      {"tanh", Primitive::kTanh},       {"softmax", Primitive::kSoftmax},
      {"cumsum", Primitive::kCumsum},   {"concat", Primitive::kConcat},
      {"slice", Primitive::kSlice},     {"repeat", Primitive::kRepeat},
      {"gather", Primitive::kGather},   {"cross_entropy", Primitive::kCrossEntropy}};
  return table;
}

std::vector<std::string> run_grad_check(GradCheck o) {
  o.options.cell = parse_cell_kind(o.cell);
  check_hidden(o.options.hidden_sizes);
  std::optional<ScopedDerivativeFault> fault;
  if (!o.fault.empty()) {
    const auto it = primitives().find(o.fault);
    if (it == primitives().end()) throw ConfigError("unknown primitive '" + o.fault + "' for --fault");
    fault.emplace(it->second, o.fault_factor);
  }
  const GradCheckReport report = lm_gradient_check(o.options);
  std::vector<std::string> lines;
  char buf[64];
  for (const auto& e : report.entries) {
    std::snprintf(buf, sizeof buf, "%.3e", e.relative_error);
    lines.push_back("block=" + e.name + " relative_error=" + buf + " status=" + (e.passed ? "pass" : "fail"));
  }
  lines.push_back(std::string("result=") + (report.passed() ? "pass" : "fail"));
  return lines;
}

}  // namespace

GradCheckReport lm_gradient_check(const GradCheckOptions& o) {
  if (o.steps < 2) throw ConfigError("gradient check needs at least two steps");
  if (o.vocab_size <= kReservedTokens) throw ConfigError("gradient check vocabulary must exceed the reserved ids");
  LanguageModelConfig cfg;
  cfg.vocab_size = o.vocab_size;
  cfg.embed_size = o.embed_size;
  cfg.hidden_sizes = o.hidden_sizes;
  cfg.chunk_factor = o.chunk_factor;
  cfg.cell = o.cell;
  cfg.tie_weights = false;
  cfg.validate();
  LanguageModel model(cfg);
  Rng rng(o.seed);
  for (Parameter* p : model.parameters()) {
    for (double& v : p->value.values()) v = rng.uniform(-o.param_scale, o.param_scale);
  }
  std::vector<int> tokens;
  for (std::size_t t = 0; t + 1 < o.steps; ++t) {
    tokens.push_back(static_cast<int>(kReservedTokens + rng.below(o.vocab_size - kReservedTokens)));
  }
  const std::vector<std::span<const int>> rows{tokens};
  auto recorded = [&] {
    Tape tape;
    tape.backward(lm_batch_loss(tape, model, rows, nullptr).total);
  };
  auto plain = [&] {
    Tape tape(Tape::Mode::kInference);
    return lm_batch_loss(tape, model, rows, nullptr).total.value().item();
  };
  return check_gradients(recorded, plain, model.parameters(), o.tolerance, o.epsilon);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ON-LSTM language models and unsupervised constituency parsing", "onlstm"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.config_formatter(std::make_shared<SubcommandConfig>(&app));
  app.allow_config_extras(false);
  app.option_defaults()->always_capture_default();

  std::uint64_t seed = 1;
  std::string out_dir;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_dir, "output directory")->default_str("out/" + sub->get_name());
    sub->fallthrough();
  };

  GenCorpus gen_corpus;
  auto* gen_corpus_cmd = app.add_subcommand("gen-corpus", "sample sentences and gold trees from a PCFG");
  gen_corpus_cmd->add_option("--count", gen_corpus.count, "training sentences")->check(CLI::PositiveNumber);
  gen_corpus_cmd->add_option("--valid", gen_corpus.valid, "validation sentences");
  gen_corpus_cmd->add_option("--test", gen_corpus.test, "held-out sentences");
  gen_corpus_cmd->add_option("--grammar", gen_corpus.grammar, "grammar file (default: built-in)");
  gen_corpus_cmd->add_option("--max-length", gen_corpus.cfg.max_length);
  gen_corpus_cmd->add_option("--max-depth", gen_corpus.cfg.max_depth);
  common(gen_corpus_cmd);

  LogicConfig logic;
  auto* gen_logic_cmd = app.add_subcommand("gen-logic", "sample labeled formula pairs");
  gen_logic_cmd->add_option("--train-size", logic.train_size, "training pool before the validation split");
  gen_logic_cmd->add_option("--test-per-bucket", logic.test_per_bucket);
  gen_logic_cmd->add_option("--max-ops-train", logic.max_ops_train);
  gen_logic_cmd->add_option("--max-ops-test", logic.max_ops_test);
  gen_logic_cmd->add_option("--label-cap", logic.label_cap);
  gen_logic_cmd->add_option("--valid-fraction", logic.valid_fraction);
  common(gen_logic_cmd);

  std::size_t pair_count = 1000;
  std::size_t pair_lm_count = 0;
  auto* gen_pairs_cmd = app.add_subcommand("gen-pairs", "sample subject-verb agreement minimal pairs");
  gen_pairs_cmd->add_option("--count", pair_count)->check(CLI::PositiveNumber);
  gen_pairs_cmd->add_option("--lm-count", pair_lm_count, "also write this many training sentences");
  common(gen_pairs_cmd);

  TrainLm train_lm;
  auto* train_lm_cmd = app.add_subcommand("train-lm", "train a language model");
  train_lm_cmd->add_option("--train", train_lm.train, "one tokenized sentence per line")->required();
  train_lm_cmd->add_option("--valid", train_lm.valid);
  train_lm_cmd->add_option("--min-count", train_lm.min_count, "rarer tokens map to <unk>");
  train_lm_cmd->add_flag("--untied", train_lm.untied, "separate decoder matrix");
  train_lm_cmd->add_flag("--save-init", train_lm.save_init, "also write the initial weights to init.ckpt");
  add_model_flags(train_lm_cmd, train_lm.model);
  add_train_flags(train_lm_cmd, train_lm.train_config);
  common(train_lm_cmd);

  Parse parse;
  auto* parse_cmd = app.add_subcommand("parse", "induce one tree per input sentence");
  parse_cmd->add_option("--checkpoint", parse.checkpoint)->required();
  parse_cmd->add_option("--vocab", parse.vocab, "default: vocab.txt beside the checkpoint");
  parse_cmd->add_option("--input", parse.input, "token lines or bracketed trees")->required();
  parse_cmd->add_option("--layer", parse.layer, "layer index or 'all' (default: middle layer)");
  parse_cmd->add_option("--cell", parse.cell, "expected cell kind")->check(CLI::IsMember({"onlstm", "lstm"}));
  common(parse_cmd);

  EvalF1 eval_f1;
  auto* eval_f1_cmd = app.add_subcommand("eval-f1", "unlabeled bracket F1 against gold trees");
  eval_f1_cmd->add_option("--pred", eval_f1.pred);
  eval_f1_cmd->add_option("--gold", eval_f1.gold)->required();
  eval_f1_cmd->add_option("--baseline", eval_f1.baseline, "score a trivial tree instead of --pred")
      ->check(CLI::IsMember({"right", "left", "random", "balanced"}));
  common(eval_f1_cmd);

  ScorePairs score;
  auto* score_cmd = app.add_subcommand("score-pairs", "grammatical-vs-ungrammatical preference");
  score_cmd->add_option("--checkpoint", score.checkpoint)->required();
  score_cmd->add_option("--vocab", score.vocab, "default: vocab.txt beside the checkpoint");
  score_cmd->add_option("--pairs", score.pairs, "category<TAB>grammatical<TAB>ungrammatical")->required();
  score_cmd->add_option("--cell", score.cell, "expected cell kind")->check(CLI::IsMember({"onlstm", "lstm"}));
  common(score_cmd);

  TrainLogic train_logic;
  train_logic.model.hidden = {64};
  auto* train_logic_cmd = app.add_subcommand("train-logic", "train relation classifiers, report accuracy by length");
  train_logic_cmd->add_option("--data", train_logic.data, "directory from gen-logic")->required();
  train_logic_cmd->add_option("--mlp", train_logic.mlp, "classifier hidden size");
  train_logic_cmd->add_flag("--save-init", train_logic.save_init, "also write initial weights");
  add_model_flags(train_logic_cmd, train_logic.model);
  train_logic_cmd->remove_option(train_logic_cmd->get_option("--cell"));
  train_logic_cmd->add_option("--cell", train_logic.cells, "onlstm and/or lstm; repeat for several")
      ->check(CLI::IsMember({"onlstm", "lstm"}));
  add_train_flags(train_logic_cmd, train_logic.train_config);
  common(train_logic_cmd);

  EvalLogic eval_logic;
  auto* eval_logic_cmd = app.add_subcommand("eval-logic", "accuracy by length of trained classifiers");
  eval_logic_cmd->add_option("--checkpoint", eval_logic.checkpoints, "repeat for several models")->required();
  eval_logic_cmd->add_option("--vocab", eval_logic.vocab, "default: vocab.txt beside the first checkpoint");
  eval_logic_cmd->add_option("--test", eval_logic.test)->required();
  eval_logic_cmd->add_option("--cell", eval_logic.cell, "expected cell kind")->check(CLI::IsMember({"onlstm", "lstm"}));
  common(eval_logic_cmd);

  GradCheck grad;
  auto* grad_cmd = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  grad_cmd->add_option("--cell", grad.cell)->check(CLI::IsMember({"onlstm", "lstm"}));
  grad_cmd->add_option("--hidden", grad.options.hidden_sizes)->delimiter(',');
  grad_cmd->add_option("--chunk", grad.options.chunk_factor)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--embed", grad.options.embed_size)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--vocab-size", grad.options.vocab_size);
  grad_cmd->add_option("--steps", grad.options.steps);
  grad_cmd->add_option("--param-scale", grad.options.param_scale, "parameters drawn from U(-s, s)")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--epsilon", grad.options.epsilon)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tolerance", grad.options.tolerance)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--fault", grad.fault, "scale one primitive's derivative rule (testing hook)");
  grad_cmd->add_option("--fault-factor", grad.fault_factor);
  common(grad_cmd);

  // A repeated scalar flag keeps its last value; list options accumulate.
  for (CLI::App* sub : app.get_subcommands({})) {
    for (CLI::Option* opt : sub->get_options()) {
      if (opt->get_expected_max() <= 1) opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
  }

  std::vector<std::string> argv_store(args);
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kOk;
    return dynamic_cast<const CLI::FileError*>(&e) ? kMissingFile : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  grad.options.seed = seed;
  if (out_dir.empty()) out_dir = "out/" + sub->get_name();
  const std::vector<std::string> recorded(args.begin() + 1, args.end());
  std::vector<std::string> outputs;
  try {
    const std::string name = sub->get_name();
    std::vector<std::string> lines;
    if (name == "gen-corpus") {
      const fs::path dir = prepare_out(out_dir);
      run_gen_corpus(gen_corpus, seed, dir, outputs);
    } else if (name == "gen-logic") {
      logic.validate();
      std::ostringstream notes;
      const fs::path dir = prepare_out(out_dir);
      run_gen_logic(logic, seed, dir, outputs, notes);
      out << notes.str();
    } else if (name == "gen-pairs") {
      run_gen_pairs(pair_count, pair_lm_count, seed, prepare_out(out_dir), outputs);
    } else if (name == "train-lm") {
      std::ostringstream summary;
      run_train_lm(train_lm, seed, prepare_out(out_dir), outputs, summary);
      out << summary.str();
    } else if (name == "parse") {
      run_parse(parse, prepare_out(out_dir), outputs);
    } else if (name == "eval-f1") {
      lines = run_eval_f1(eval_f1, seed);
    } else if (name == "score-pairs") {
      lines = run_score_pairs(score);
    } else if (name == "train-logic") {
      lines = run_train_logic(train_logic, seed, prepare_out(out_dir), outputs);
    } else if (name == "eval-logic") {
      lines = run_eval_logic(eval_logic);
    } else if (name == "grad-check") {
      lines = run_grad_check(grad);
    }
    const fs::path dir = prepare_out(out_dir);
    if (!lines.empty() && name != "train-logic") {
      io::atomic_write(dir / "results.txt", join(lines));
      outputs.push_back("results.txt");
    }
    write_manifest(dir, *sub, recorded, outputs);
    out << join(lines);
    if (name == "grad-check" && lines.back() != "result=pass") throw CheckFailed("gradient check failed");
    return kOk;
  } catch (const MissingFile& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kMissingFile;
  } catch (const NumericalError& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kNonFinite;
  } catch (const CellMismatch& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kCellMismatch;
  } catch (const UnsupportedModelError& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kCellMismatch;
  } catch (const AlignmentError& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kLengthMismatch;
  } catch (const CheckFailed& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kCheckFailed;
  } catch (const ConfigError& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "onlstm " << sub->get_name() << ": " << e.what() << "\n";
    return kBadInput;
  }
}

}  // namespace onlstm::app
