#include <gtest/gtest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <unistd.h>

#include "app.hpp"
#include "onlstm/data/vocab.hpp"
#include "onlstm/io/files.hpp"
#include "onlstm/models/checkpoint.hpp"
#include "onlstm/parsing/induction.hpp"

namespace onlstm {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "onlstm");
  std::ostringstream out, err;
  const int code = app::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0 || line.find(' ') != std::string::npos) {
      ADD_FAILURE() << "not a key=value line: '" << line << "'";
      continue;
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::vector<std::vector<std::string>> table(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream cols(line);
    for (std::string c; std::getline(cols, c, '\t');) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// One small corpus and language model shared by the tests.
class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("onlstm_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    ASSERT_EQ(run({"gen-corpus", "--count", "400", "--valid", "50", "--test", "30", "--seed", "3", "--out",
                   path("data")}).code, 0);
    ASSERT_EQ(run(lm_args("lm")).code, 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string path(const std::string& rel) { return (root_ / rel).string(); }
  static std::vector<std::string> lm_args(const std::string& out) {
    return {"train-lm", "--train", path("data/train.txt"), "--valid", path("data/valid.txt"), "--hidden", "16,16",
            "--embed", "16", "--chunk", "4", "--epochs", "2", "--seed", "5", "--out", path(out)};
  }
  static void write(const std::string& rel, const std::string& text) { io::atomic_write(root_ / rel, text); }
  static std::string read(const std::string& rel) { return io::read_file(root_ / rel); }

  static fs::path root_;
};

fs::path CliTest::root_;

TEST_F(CliTest, SuccessfulRunsAreQuietAndWriteManifests) {
  const Result r = run({"eval-f1", "--baseline", "right", "--gold", path("data/test.trees"), "--out", path("q")});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.err, "");
  const auto manifest = nlohmann::json::parse(read("q/manifest.json"));
  EXPECT_EQ(manifest["subcommand"], "eval-f1");
  EXPECT_EQ(manifest["config"]["baseline"], "right");
  EXPECT_EQ(manifest["config"]["seed"], "1");
  EXPECT_TRUE(manifest["versions"].contains("checkpoint_format"));
  const auto lm = nlohmann::json::parse(read("lm/manifest.json"));
  EXPECT_EQ(lm["config"]["hidden"], (std::vector<std::string>{"16", "16"}));
  EXPECT_EQ(lm["config"]["seed"], "5");
  EXPECT_EQ(lm["config"]["dropout-input"], "0");
}

TEST_F(CliTest, ConfigFileSitsBetweenDefaultsAndFlags) {
  write("run.ini", "# comment\nepochs = 1\nhidden = 8,8\nembed = 8\nchunk = 2\nlr = 0.01\n");
  const Result r = run({"train-lm", "--config", path("run.ini"), "--train", path("data/train.txt"), "--lr", "0.005",
                        "--out", path("cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto config = nlohmann::json::parse(read("cfg/manifest.json"))["config"];
  EXPECT_EQ(config["epochs"], "1");
  EXPECT_EQ(config["embed"], "8");
  EXPECT_EQ(config["lr"], "0.005");
  EXPECT_EQ(config["batch"], "32");
  EXPECT_EQ(load_language_model(root_ / "cfg/model.ckpt").config().hidden_sizes, (std::vector<std::size_t>{8, 8}));
  write("bad.ini", "epoch = 1\n");
  EXPECT_EQ(run({"train-lm", "--config", path("bad.ini"), "--train", path("data/train.txt")}).code, app::kUsage);
}

TEST_F(CliTest, ExitCodes) {
  const Result missing = run({"train-lm", "--train", path("nope.txt"), "--out", path("x")});
  EXPECT_EQ(missing.code, app::kMissingFile);
  EXPECT_NE(missing.err.find(path("nope.txt")), std::string::npos);
  EXPECT_EQ(run({"train-lm", "--config", path("nope.ini"), "--train", path("data/train.txt")}).code,
            app::kMissingFile);
  EXPECT_EQ(run({"train-lm"}).code, app::kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, app::kUsage);
  EXPECT_EQ(run({"--help"}).code, app::kOk);

  auto args = lm_args("nan");
  args.insert(args.end(), {"--lr", "1e200", "--clip", "1e300", "--epochs", "1"});
  EXPECT_EQ(run(args).code, app::kNonFinite);
}

TEST_F(CliTest, ZeroLearningRateLeavesTheInitialWeights) {
  auto args = lm_args("lr0");
  args.insert(args.end(), {"--epochs", "1", "--lr", "0", "--save-init"});
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(read("lr0/init.ckpt"), read("lr0/model.ckpt"));
}

TEST_F(CliTest, TrainingReplaysByteForByte) {
  ASSERT_EQ(run(lm_args("lm2")).code, 0);
  EXPECT_EQ(read("lm/model.ckpt"), read("lm2/model.ckpt"));
  EXPECT_EQ(read("lm/vocab.txt"), read("lm2/vocab.txt"));
  auto other = lm_args("lm3");
  other.insert(other.end(), {"--seed", "6"});
  ASSERT_EQ(run(other).code, 0);
  EXPECT_NE(read("lm/model.ckpt"), read("lm3/model.ckpt"));
}

TEST_F(CliTest, SyntheticRunBeatsTheUniformModel) {
  ASSERT_EQ(run({"gen-corpus", "--count", "1000", "--valid", "100", "--test", "0", "--out", path("syn")}).code, 0);
  const Result r = run({"train-lm", "--train", path("syn/train.txt"), "--valid", path("syn/valid.txt"), "--epochs",
                        "2", "--out", path("synlm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = key_values(r.out);
  // A uniform model over the vocabulary has perplexity equal to its size.
  EXPECT_LT(std::stod(kv.at("valid_perplexity")), std::stod(kv.at("vocab_size")));
}

TEST_F(CliTest, ParseKeepsLinesAndReplays) {
  write("in.txt", "# header\nthe dog slept\n\ndog\na cat saw the king\n");
  ASSERT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("in.txt"), "--out", path("p1")}).code,
            0);
  ASSERT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("in.txt"), "--out", path("p2")}).code,
            0);
  const std::string trees = read("p1/trees.txt");
  EXPECT_EQ(trees, read("p2/trees.txt"));
  const auto lines = io::read_lines(root_ / "p1/trees.txt");
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "# header");
  EXPECT_EQ(lines[2], "");
  EXPECT_EQ(lines[3], "dog");
  EXPECT_EQ(parse_bracketed(lines[1]).tokens, (std::vector<std::string>{"the", "dog", "slept"}));

  // The same trees through the library.
  const LanguageModel model = load_language_model(root_ / "lm/model.ckpt");
  const Vocab vocab = Vocab::load(root_ / "lm/vocab.txt");
  const Sentence s{"a", "cat", "saw", "the", "king"};
  EXPECT_EQ(lines[4], write_bracketed(parse_sentence(model, vocab.encode(s), default_parse_layer(model)), s));
}

TEST_F(CliTest, ParseLayers) {
  ASSERT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.trees"), "--layer", "all",
                 "--out", path("pall")}).code, 0);
  for (int l = 0; l < 2; ++l) {
    EXPECT_EQ(io::read_lines(root_ / ("pall/trees.layer" + std::to_string(l) + ".txt")).size(),
              io::read_lines(root_ / "data/test.trees").size());
  }
  ASSERT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.txt"), "--layer", "1",
                 "--out", path("p1b")}).code, 0);
  EXPECT_EQ(read("p1b/trees.txt"), read("pall/trees.layer1.txt"));
  EXPECT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.txt"), "--layer", "2",
                 "--out", path("px")}).code, app::kUsage);
  EXPECT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.txt"), "--layer", "one",
                 "--out", path("px")}).code, app::kUsage);
}

TEST_F(CliTest, CellKindMismatch) {
  auto args = lm_args("lstm");
  args.insert(args.end(), {"--cell", "lstm", "--epochs", "1"});
  ASSERT_EQ(run(args).code, 0);
  const Result r = run({"parse", "--checkpoint", path("lstm/model.ckpt"), "--input", path("data/test.txt"), "--out",
                        path("px")});
  EXPECT_EQ(r.code, app::kCellMismatch);
  EXPECT_NE(r.err.find("lstm"), std::string::npos);
  EXPECT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.txt"), "--cell", "lstm",
                 "--out", path("px")}).code, app::kCellMismatch);
  write("p.tsv", "simple\tthe dog slept\tthe dog sleeps\n");
  EXPECT_EQ(run({"score-pairs", "--checkpoint", path("lstm/model.ckpt"), "--pairs", path("p.tsv"), "--cell",
                 "onlstm", "--out", path("px")}).code, app::kCellMismatch);
}

TEST_F(CliTest, EvalF1) {
  const auto self = key_values(
      run({"eval-f1", "--pred", path("data/test.trees"), "--gold", path("data/test.trees"), "--out", path("e1")}).out);
  EXPECT_EQ(self.at("f1"), "1.000000");
  EXPECT_EQ(self.at("sentences"), "30");
  EXPECT_EQ(self.at("label_accuracy.NP"), "1.000000");

  write("right.trees", "( a ( b c ) )\n( x ( y z ) )\n");
  const auto left = key_values(
      run({"eval-f1", "--baseline", "left", "--gold", path("right.trees"), "--out", path("e2")}).out);
  EXPECT_EQ(left.at("f1"), "0.500000");
  const auto right = key_values(
      run({"eval-f1", "--baseline", "right", "--gold", path("right.trees"), "--out", path("e2")}).out);
  EXPECT_EQ(right.at("f1"), "1.000000");

  write("short.trees", "( a ( b c ) )\n");
  EXPECT_EQ(run({"eval-f1", "--pred", path("short.trees"), "--gold", path("right.trees"), "--out", path("e3")}).code,
            app::kLengthMismatch);
  write("other.trees", "( a ( b c ) )\n( x y )\n");
  EXPECT_EQ(run({"eval-f1", "--pred", path("other.trees"), "--gold", path("right.trees"), "--out", path("e3")}).code,
            app::kLengthMismatch);
  EXPECT_EQ(run({"eval-f1", "--gold", path("right.trees"), "--out", path("e3")}).code, app::kUsage);
}

TEST_F(CliTest, ParsedTreesScoreLikeTheLibrary) {
  ASSERT_EQ(run({"parse", "--checkpoint", path("lm/model.ckpt"), "--input", path("data/test.txt"), "--out",
                 path("pf")}).code, 0);
  const auto kv =
      key_values(run({"eval-f1", "--pred", path("pf/trees.txt"), "--gold", path("data/test.trees"), "--out",
                      path("ef")}).out);
  const LanguageModel model = load_language_model(root_ / "lm/model.ckpt");
  const Vocab vocab = Vocab::load(root_ / "lm/vocab.txt");
  std::vector<EvalSentence> corpus;
  for (auto& g : read_bracketed_file(root_ / "data/test.trees")) corpus.push_back({vocab.encode(g.tokens), g});
  const CorpusF1 lib = corpus_f1(model, default_parse_layer(model), corpus);
  EXPECT_NEAR(std::stod(kv.at("f1")), lib.f1, 1e-6);
}

TEST_F(CliTest, ScorePairs) {
  write("pairs.tsv",
        "simple\tthe dog slept\tthe dog cat\n"
        "pp\tthe dog near the cat slept\tthe dog near the cat the\n"
        "simple\ta king ran\ta king a\n");
  const Result r = run({"score-pairs", "--checkpoint", path("lm/model.ckpt"), "--pairs", path("pairs.tsv"), "--out",
                        path("sp")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto kv = key_values(r.out);
  EXPECT_EQ(kv.count("accuracy.long"), 0u);
  EXPECT_EQ(kv.at("count.simple"), "2");
  for (const auto& [key, value] : kv) {
    if (key.rfind("accuracy", 0) != 0) continue;
    EXPECT_GE(std::stod(value), 0.0);
    EXPECT_LE(std::stod(value), 1.0);
  }
  const LanguageModel model = load_language_model(root_ / "lm/model.ckpt");
  const Vocab vocab = Vocab::load(root_ / "lm/vocab.txt");
  std::vector<MinimalPair> pairs;
  for (const auto& p : read_pairs(root_ / "pairs.tsv")) {
    pairs.push_back({vocab.encode(p.grammatical), vocab.encode(p.ungrammatical)});
  }
  EXPECT_NEAR(std::stod(kv.at("accuracy")), score_pairs(model, pairs), 1e-6);
}

TEST_F(CliTest, GeneratorsReplay) {
  for (const char* dir : {"g1", "g2"}) {
    ASSERT_EQ(run({"gen-logic", "--train-size", "100", "--test-per-bucket", "5", "--seed", "4", "--out", path(dir)})
                  .code, 0);
    ASSERT_EQ(run({"gen-pairs", "--count", "20", "--lm-count", "20", "--seed", "4", "--out", path(dir)}).code, 0);
  }
  for (const char* f : {"train.tsv", "valid.tsv", "test.tsv", "pairs.tsv", "corpus.txt"}) {
    EXPECT_EQ(read(std::string("g1/") + f), read(std::string("g2/") + f)) << f;
  }
  EXPECT_EQ(read_logic(root_ / "g1/test.tsv").size(), 60u);
  EXPECT_EQ(io::read_lines(root_ / "g1/train.tsv").front(), "# generator=gen-logic/train version=1 count=90 seed=4");
}

TEST_F(CliTest, LogicTableHasOneRowPerBucketAndReplays) {
  ASSERT_EQ(run({"gen-logic", "--train-size", "300", "--test-per-bucket", "20", "--out", path("lg")}).code, 0);
  std::vector<std::string> args{"train-logic", "--data", path("lg"), "--cell", "onlstm", "--cell", "lstm",
                                "--hidden", "8", "--embed", "8", "--chunk", "2", "--mlp", "16", "--epochs", "1"};
  auto a = args;
  a.insert(a.end(), {"--out", path("tl1")});
  auto b = args;
  b.insert(b.end(), {"--out", path("tl2")});
  const Result r1 = run(a);
  const Result r2 = run(b);
  ASSERT_EQ(r1.code, 0) << r1.err;
  EXPECT_EQ(r1.out, r2.out);
  const auto rows = table(r1.out);
  ASSERT_EQ(rows.size(), 13u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"bucket", "count", "onlstm", "lstm"}));
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(rows[k][0], std::to_string(k));
    EXPECT_EQ(rows[k][1], "20");
  }
  // eval-logic on the saved checkpoints reproduces the table.
  const Result e = run({"eval-logic", "--checkpoint", path("tl1/onlstm.ckpt"), "--checkpoint", path("tl1/lstm.ckpt"),
                        "--test", path("lg/test.tsv"), "--out", path("el")});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto again = table(e.out);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    EXPECT_EQ(std::vector<std::string>(again[k].begin() + 2, again[k].end()),
              std::vector<std::string>(rows[k].begin() + 2, rows[k].end()));
  }
  EXPECT_EQ(run({"eval-logic", "--checkpoint", path("tl1/lstm.ckpt"), "--cell", "onlstm", "--test",
                 path("lg/test.tsv"), "--out", path("el")}).code, app::kCellMismatch);
}

// An untrained classifier's prediction carries no information about the
// label, so over random initializations its expected accuracy is 1/7.
TEST_F(CliTest, UntrainedClassifiersScoreNearChance) {
  ASSERT_EQ(run({"gen-logic", "--train-size", "200", "--test-per-bucket", "100", "--out", path("ln")}).code, 0);
  std::vector<std::string> eval{"eval-logic", "--test", path("ln/test.tsv"), "--vocab", path("u1/vocab.txt"), "--out",
                                path("eu")};
  for (int seed = 1; seed <= 10; ++seed) {
    const std::string out = "u" + std::to_string(seed);
    ASSERT_EQ(run({"train-logic", "--data", path("ln"), "--hidden", "16", "--embed", "16", "--chunk", "4", "--mlp",
                   "32", "--epochs", "1", "--save-init", "--seed", std::to_string(seed), "--out", path(out)}).code,
              0);
    eval.insert(eval.end(), {"--checkpoint", path(out + "/init-onlstm.ckpt")});
  }
  const Result r = run(eval);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = table(r.out);
  ASSERT_EQ(rows.size(), 13u);
  for (std::size_t k = 1; k < rows.size(); ++k) {
    double mean = 0.0;
    for (std::size_t c = 2; c < rows[k].size(); ++c) mean += std::stod(rows[k][c]);
    mean /= static_cast<double>(rows[k].size() - 2);
    EXPECT_NEAR(mean, 1.0 / 7.0, 0.1) << "bucket " << rows[k][0];
  }
}

TEST_F(CliTest, GradCheck) {
  const Result ok = run({"grad-check", "--out", path("gc")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_EQ(ok.err, "");
  EXPECT_NE(ok.out.find("block=layer1.master_forget.U"), std::string::npos);
  EXPECT_NE(ok.out.find("result=pass"), std::string::npos);

  const Result faulty = run({"grad-check", "--fault", "cumsum", "--out", path("gc")});
  EXPECT_EQ(faulty.code, app::kCheckFailed);
  const auto at = faulty.out.find("block=layer0.master_forget.W ");
  ASSERT_NE(at, std::string::npos);
  const std::string line = faulty.out.substr(at, faulty.out.find('\n', at) - at);
  EXPECT_NE(line.find("status=fail"), std::string::npos) << line;

  const Result strict = run({"grad-check", "--tolerance", "1e-12", "--out", path("gc")});
  EXPECT_EQ(strict.code, app::kCheckFailed);
  EXPECT_EQ(run({"grad-check", "--fault", "nonsense", "--out", path("gc")}).code, app::kUsage);
}

}  // namespace
}  // namespace onlstm
