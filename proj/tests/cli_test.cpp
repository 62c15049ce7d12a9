#include <cmath>
#include <sstream>

#include "gtest/gtest.h"
#include "sgcl/checkpoint.hpp"
#include "sgcl/eval.hpp"
#include "support/cli_runner.hpp"
#include "support/synthetic.hpp"
#include "support/testutil.hpp"

using namespace sgcl;

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<std::string> small_model_flags() {
  return {"--num_layers", "2",  "--hidden_size", "16", "--num_heads", "2",
          "--ffn_size",   "32", "--max_seq_len", "32"};
}

std::vector<std::string> with_flags(std::vector<std::string> args,
                                    const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

}  // namespace

TEST(CliHelp, EveryCommandListsFlagsAndExitsZero) {
  for (const std::string command :
       {"train", "eval", "ablate", "gradcheck", "embed"}) {
    auto result = cli::run({command, "--help"});
    EXPECT_EQ(result.exit_code, 0) << command << ": " << result.err;
    EXPECT_NE(result.out.find("--help"), std::string::npos) << command;
  }
  auto top = cli::run({"--help"});
  EXPECT_EQ(top.exit_code, 0);
  for (const std::string command : {"train", "eval", "ablate", "gradcheck", "embed"})
    EXPECT_NE(top.out.find(command), std::string::npos) << command;

  // Default values are visible in the per-command help.
  auto train_help = cli::run({"train", "--help"});
  EXPECT_NE(train_help.out.find("default: 16"), std::string::npos);
}

TEST(CliTrain, MissingCorpusPathNamesTheFlag) {
  auto result = cli::run({"train"});
  EXPECT_EQ(result.exit_code, 2);
  EXPECT_NE(result.err.find("--train_corpus"), std::string::npos) << result.err;
}

TEST(CliTrain, UnknownConfigKeyIsUsageError) {
  auto result = cli::run({"train", "--definitely_not_a_flag", "1"});
  EXPECT_EQ(result.exit_code, 2);
}

TEST(CliTrain, NoOpRunKeepsInitializationBitExact) {
  testutil::TempDir dir("cli_noop");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto args = with_flags({"train", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--out_dir", dir.file("out"),
                          "--learning_rate", "0", "--reg_weight", "0",
                          "--batch_size", "8", "--seed", "7"},
                         small_model_flags());
  auto result = cli::run(args);
  ASSERT_EQ(result.exit_code, 0) << result.err;

  Checkpoint checkpoint = load_checkpoint(dir.file("out/model.sgck"));
  EncoderConfig config = checkpoint.config;
  EncoderParams initial = init_params(config);
  ASSERT_EQ(initial.params.size(), checkpoint.tuned.size());
  for (std::size_t i = 0; i < initial.params.size(); ++i)
    EXPECT_EQ(initial.params[i].tensor.values(),
              checkpoint.tuned[i].tensor.values())
        << checkpoint.tuned[i].name;
}

TEST(CliTrain, ProducesDeclaredArtifacts) {
  testutil::TempDir dir("cli_artifacts");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto args = with_flags({"train", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--out_dir", dir.file("out"),
                          "--batch_size", "8", "--epochs", "2", "--eval_step",
                          "3", "--seed", "3"},
                         small_model_flags());
  auto result = cli::run(args);
  ASSERT_EQ(result.exit_code, 0) << result.err;
  EXPECT_TRUE(std::filesystem::exists(dir.file("out/model.sgck")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("out/train_log.tsv")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("out/eval.tsv")));
  // stdout carries the final EvalResult TSV row.
  EXPECT_NE(result.out.find("tuned_cls\t"), std::string::npos);

  const auto log_lines =
      split_lines(testutil::read_file(dir.file("out/train_log.tsv")));
  ASSERT_FALSE(log_lines.empty());
  EXPECT_NE(log_lines[0].find("step=1"), std::string::npos);
  EXPECT_NE(log_lines[0].find("total="), std::string::npos);
}

namespace {

struct TrainedFixture {
  testutil::TempDir dir{"cli_trained"};
  std::string train_path, valid_path;
  std::string checkpoint_path;

  TrainedFixture() {
    auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
    cli::write_corpus_files(dir, corpus, &train_path, &valid_path);
    auto args = with_flags({"train", "--train_corpus", train_path, "--valid_tsv",
                            valid_path, "--out_dir", dir.file("out"),
                            "--batch_size", "8", "--epochs", "1", "--seed", "5"},
                           small_model_flags());
    auto result = cli::run(args);
    if (result.exit_code != 0)
      throw std::runtime_error("fixture training failed: " + result.err);
    checkpoint_path = dir.file("out/model.sgck");
  }
};

TrainedFixture& trained_fixture() {
  static TrainedFixture fixture;
  return fixture;
}

}  // namespace

TEST(CliEval, SingleStrategyEmitsOneRow) {
  auto& fixture = trained_fixture();
  auto result = cli::run({"eval", "--checkpoint", fixture.checkpoint_path,
                          "--tsv", fixture.valid_path, "--strategy", "tuned_cls",
                          "--out_dir", fixture.dir.file("eval_out")});
  ASSERT_EQ(result.exit_code, 0) << result.err;
  auto lines = split_lines(result.out);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].rfind("tuned_cls\t", 0), 0u);
}

TEST(CliEval, SweepEmitsFullGridAndIsByteDeterministic) {
  auto& fixture = trained_fixture();
  std::vector<std::string> args = {
      "eval",      "--checkpoint",  fixture.checkpoint_path,
      "--tsv",     fixture.valid_path, "--sweep",
      "--out_dir", fixture.dir.file("eval_sweep")};
  auto first = cli::run(args);
  ASSERT_EQ(first.exit_code, 0) << first.err;
  // l=2: (l+1) layers x 3 poolings + tuned_cls = 10 rows.
  EXPECT_EQ(split_lines(first.out).size(), 10u);

  auto second = cli::run(args);
  EXPECT_EQ(first.out, second.out);
}

TEST(CliEval, MissingInputsAreUsageErrors) {
  auto& fixture = trained_fixture();
  auto no_ckpt = cli::run({"eval", "--checkpoint", "/nonexistent.sgck", "--tsv",
                           fixture.valid_path});
  EXPECT_EQ(no_ckpt.exit_code, 2);
  auto bad_strategy = cli::run({"eval", "--checkpoint", fixture.checkpoint_path,
                                "--tsv", fixture.valid_path, "--strategy",
                                "layerx_bogus"});
  EXPECT_EQ(bad_strategy.exit_code, 2);
}

TEST(CliEmbed, WritesOneLinePerSentenceMatchingLibraryPath) {
  auto& fixture = trained_fixture();
  const std::string sentences_path = fixture.dir.file("sentences.txt");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string text;
  for (int i = 0; i < 5; ++i)
    text += corpus.train[static_cast<std::size_t>(i)] + "\n";
  testutil::write_file(sentences_path, text);

  const std::string out_path = fixture.dir.file("vectors.tsv");
  auto result = cli::run({"embed", "--checkpoint", fixture.checkpoint_path,
                          "--sentences", sentences_path, "--out", out_path});
  ASSERT_EQ(result.exit_code, 0) << result.err;
  auto lines = split_lines(testutil::read_file(out_path));
  ASSERT_EQ(lines.size(), 5u);

  // Cross-command consistency: vectors match the library embedding path.
  Checkpoint checkpoint = load_checkpoint(fixture.checkpoint_path);
  EncoderParams params = params_from_checkpoint(checkpoint);
  for (const auto& line : lines) {
    auto tab = line.find('\t');
    ASSERT_NE(tab, std::string::npos);
    auto expected = sentence_embedding(params, checkpoint.vocab,
                                       line.substr(0, tab),
                                       EmbeddingStrategy::tuned_cls());
    std::istringstream numbers(line.substr(tab + 1));
    double x;
    std::size_t j = 0;
    while (numbers >> x) {
      ASSERT_LT(j, expected.size());
      EXPECT_NEAR(x, expected[j], 1e-12);
      ++j;
    }
    EXPECT_EQ(j, expected.size());
  }
}

TEST(CliEmbed, NonexistentCheckpointIsExitTwo) {
  auto& fixture = trained_fixture();
  auto result = cli::run({"embed", "--checkpoint", "/no/such/file.sgck",
                          "--sentences", fixture.train_path, "--out",
                          fixture.dir.file("x.tsv")});
  EXPECT_EQ(result.exit_code, 2);
}

TEST(CliGradcheck, PassesCleanFailsCorrupted) {
  testutil::TempDir dir("cli_gc");
  auto clean = cli::run({"gradcheck", "--out_dir", dir.file("clean")});
  EXPECT_EQ(clean.exit_code, 0) << clean.err;
  auto rows = split_lines(clean.out);
  ASSERT_EQ(rows.size(), 4u);  // one per loss variant
  for (const auto& row : rows) EXPECT_NE(row.find("pass"), std::string::npos);

  auto corrupted = cli::run({"gradcheck", "--corrupt-gradient", "--out_dir",
                             dir.file("corrupt")});
  EXPECT_EQ(corrupted.exit_code, 1);
}

TEST(CliAblate, SingleVariantSingleSeedOneRow) {
  testutil::TempDir dir("cli_ablate1");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto args = with_flags({"ablate", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--out_dir", dir.file("out"),
                          "--variants", "opt2", "--seeds", "1", "--batch_size",
                          "8", "--epochs", "1"},
                         small_model_flags());
  auto result = cli::run(args);
  ASSERT_EQ(result.exit_code, 0) << result.err;
  auto lines = split_lines(result.out);
  ASSERT_EQ(lines.size(), 1u);
  EXPECT_EQ(lines[0].rfind("opt2\tdefaults\t", 0), 0u);
}

TEST(CliAblate, MeanOverTwoSeedsIsArithmeticMean) {
  testutil::TempDir dir("cli_ablate2");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto base_args = with_flags({"ablate", "--train_corpus", train_path,
                               "--valid_tsv", valid_path, "--variants", "opt2",
                               "--batch_size", "8", "--epochs", "1"},
                              small_model_flags());

  auto parse_mean = [](const std::string& line) {
    std::istringstream in(line);
    std::string variant, setting, mean_text;
    std::getline(in, variant, '\t');
    std::getline(in, setting, '\t');
    std::getline(in, mean_text, '\t');
    return std::stod(mean_text);
  };

  auto seed1 = cli::run(with_flags(base_args, {"--seeds", "1", "--out_dir",
                                               dir.file("s1")}));
  auto seed2 = cli::run(with_flags(base_args, {"--seeds", "2", "--out_dir",
                                               dir.file("s2")}));
  auto both = cli::run(with_flags(base_args, {"--seeds", "1,2", "--out_dir",
                                              dir.file("s12")}));
  ASSERT_EQ(seed1.exit_code, 0) << seed1.err;
  ASSERT_EQ(seed2.exit_code, 0) << seed2.err;
  ASSERT_EQ(both.exit_code, 0) << both.err;

  const double m1 = parse_mean(split_lines(seed1.out)[0]);
  const double m2 = parse_mean(split_lines(seed2.out)[0]);
  const double mean_both = parse_mean(split_lines(both.out)[0]);
  EXPECT_NEAR(mean_both, (m1 + m2) / 2.0, 1e-12);
}

TEST(CliAblate, WorkerCapFromEnvironmentKeepsOutputIdentical) {
  testutil::TempDir dir("cli_ablate_workers");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto args = with_flags({"ablate", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--variants", "opt1,opt2", "--seeds",
                          "1,2", "--batch_size", "8", "--epochs", "1"},
                         small_model_flags());
  auto serial = cli::run(with_flags(args, {"--out_dir", dir.file("w1")}),
                         "SG_NUM_WORKERS=1");
  auto parallel = cli::run(with_flags(args, {"--out_dir", dir.file("w2")}),
                           "SG_NUM_WORKERS=2");
  ASSERT_EQ(serial.exit_code, 0) << serial.err;
  ASSERT_EQ(parallel.exit_code, 0) << parallel.err;
  EXPECT_EQ(serial.out, parallel.out);
  auto bogus = cli::run(args, "SG_NUM_WORKERS=abc");
  EXPECT_EQ(bogus.exit_code, 2);
}

TEST(CliTrain, ShortFlagAliasesWork) {
  testutil::TempDir dir("cli_alias");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  // --lr 0 --lambda 0: the checkpoint must equal initialization bit-exactly.
  auto args = with_flags({"train", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--out_dir", dir.file("out"), "--lr", "0",
                          "--lambda", "0", "--tau", "0.5", "--batch_size", "8",
                          "--seed", "23"},
                         small_model_flags());
  auto result = cli::run(args);
  ASSERT_EQ(result.exit_code, 0) << result.err;
  Checkpoint checkpoint = load_checkpoint(dir.file("out/model.sgck"));
  EXPECT_DOUBLE_EQ(checkpoint.train_config.learning_rate, 0.0);
  EXPECT_DOUBLE_EQ(checkpoint.train_config.reg_weight, 0.0);
  EXPECT_DOUBLE_EQ(checkpoint.train_config.temperature, 0.5);
  EncoderParams initial = init_params(checkpoint.config);
  for (std::size_t i = 0; i < initial.params.size(); ++i)
    EXPECT_EQ(initial.params[i].tensor.values(),
              checkpoint.tuned[i].tensor.values());
}

TEST(CliAblate, NoProjectionHeadRowIsLabeled) {
  testutil::TempDir dir("cli_ablate3");
  auto corpus = synthetic::make_paraphrase_corpus(8, 4, 8, 8);
  std::string train_path, valid_path;
  cli::write_corpus_files(dir, corpus, &train_path, &valid_path);

  auto args = with_flags({"ablate", "--train_corpus", train_path, "--valid_tsv",
                          valid_path, "--out_dir", dir.file("out"),
                          "--variants", "opt3", "--seeds", "1",
                          "--no-projection-head", "--batch_size", "8",
                          "--epochs", "1"},
                         small_model_flags());
  auto result = cli::run(args);
  ASSERT_EQ(result.exit_code, 0) << result.err;
  auto lines = split_lines(result.out);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_NE(lines[1].find("- Projection head"), std::string::npos);
}
