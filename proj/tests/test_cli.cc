#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "msdn/container.h"
#include "msdn/dataset.h"
#include "msdn/model.h"
#include "msdn/training.h"
#include "test_support.h"

namespace msdn {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct CliRun {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

CliRun run(const std::string& binary, const std::string& args, const TempDir& dir, const std::string& env = "") {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = (env.empty() ? "" : env + " ") + "'" + binary + "' " + args + " >'" + out.string() +
                          "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

CliRun cli(const std::string& args, const TempDir& dir, const std::string& env = "") {
  return run(MSDN_CLI_PATH, args, dir, env);
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::vector<std::vector<double>> read_numeric_csv(const fs::path& p, bool skip_first_column = true) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (!(first && skip_first_column)) row.push_back(std::stod(cell));
      first = false;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

const char* kTinySpec =
    "num_seen = 3\nnum_unseen = 2\nnum_attributes = 4\nnum_regions = 3\ndim_visual = 5\n"
    "dim_attribute = 3\nsamples_per_class = 6\n";

TEST(CliGenData, DefaultSpecLoadsWithoutViolations) {
  TempDir dir("gen");
  const CliRun r = cli("gen-data --out " + q(dir / "d.zsld"), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("features f32 600x9x16"), std::string::npos);
  EXPECT_NE(r.out.find("class_semantics f32 12x12"), std::string::npos);
  EXPECT_TRUE(validate_dataset(load_dataset(dir / "d.zsld")).empty());
}

TEST(CliGenData, SameSeedIsByteIdenticalAndEnvironmentOverrides) {
  TempDir dir("gen_seed");
  ASSERT_EQ(cli("gen-data --seed 5 --out " + q(dir / "a.zsld"), dir).code, 0);
  ASSERT_EQ(cli("gen-data --seed 5 --out " + q(dir / "b.zsld"), dir).code, 0);
  ASSERT_EQ(cli("gen-data --seed 1 --out " + q(dir / "c.zsld"), dir, "MSDN_SEED=5").code, 0);
  ASSERT_EQ(cli("gen-data --seed 6 --out " + q(dir / "d.zsld"), dir).code, 0);
  EXPECT_EQ(slurp(dir / "a.zsld"), slurp(dir / "b.zsld"));
  EXPECT_EQ(slurp(dir / "a.zsld"), slurp(dir / "c.zsld"));
  EXPECT_NE(slurp(dir / "a.zsld"), slurp(dir / "d.zsld"));
}

TEST(CliGenData, UsageErrors) {
  TempDir dir("gen_usage");
  const CliRun missing = cli("gen-data", dir);
  EXPECT_EQ(missing.code, 2);
  EXPECT_EQ(first_line(missing.err).rfind("error: code=2 kind=usage:", 0), 0u) << missing.err;
  EXPECT_EQ(cli("gen-data --out " + q(dir / "x") + " --bogus 1", dir).code, 2);
  EXPECT_EQ(cli("", dir).code, 2);
  EXPECT_EQ(cli("gen-data --out " + q(dir / "no" / "such" / "dir" / "x.zsld"), dir).code, 2);
  write_text(dir / "bad.spec", "num_unseen = 0\n");
  EXPECT_EQ(cli("gen-data --spec " + q(dir / "bad.spec") + " --out " + q(dir / "x.zsld"), dir).code, 2);
}

class CliPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    write_text(dir_ / "tiny.spec", kTinySpec);
    write_text(dir_ / "run.cfg", "epochs = 1\nbatch_size = 4\n");
    ASSERT_EQ(cli("gen-data --spec " + q(dir_ / "tiny.spec") + " --out " + q(data()), dir_).code, 0);
  }
  fs::path data() const { return dir_ / "tiny.zsld"; }
  TempDir dir_{"pipeline"};
};

TEST_F(CliPipeline, TrainWritesLoadableDeterministicCheckpoint) {
  const std::string base = "train --data " + q(data()) + " --config " + q(dir_ / "run.cfg");
  const CliRun a = cli(base + " --out " + q(dir_ / "a.ckpt") + " --history " + q(dir_ / "h.csv"), dir_);
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(cli(base + " --out " + q(dir_ / "b.ckpt"), dir_).code, 0);
  EXPECT_EQ(slurp(dir_ / "a.ckpt"), slurp(dir_ / "b.ckpt"));
  const ModelParams p = load_checkpoint(dir_ / "a.ckpt");
  EXPECT_EQ(p.dims, dims_for(load_dataset(data())));
  const std::string bytes = slurp(dir_ / "a.ckpt");
  EXPECT_EQ(serialize_container(read_container(dir_ / "a.ckpt")), std::vector<std::uint8_t>(bytes.begin(), bytes.end()));
  const std::string history = slurp(dir_ / "h.csv");
  EXPECT_EQ(first_line(history), "epoch,acec_a2v,acec_v2a,distill,total");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 2);
}

TEST_F(CliPipeline, CorruptedDataExitsThreeNamingTheViolation) {
  Dataset ds = load_dataset(data());
  ds.labels[ds.test_unseen_idx.front()] = 0;
  write_container(dir_ / "bad.zsld", dataset_to_tensors(ds));
  const CliRun r = cli("train --data " + q(dir_ / "bad.zsld") + " --out " + q(dir_ / "x.ckpt"), dir_);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(first_line(r.err).find("test_unseen_labels_unseen"), std::string::npos) << r.err;

  const std::string bytes = slurp(data());
  write_text(dir_ / "trunc.zsld", bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(cli("train --data " + q(dir_ / "trunc.zsld") + " --out " + q(dir_ / "x.ckpt"), dir_).code, 3);
}

TEST_F(CliPipeline, NonFiniteTrainingExitsFour) {
  write_text(dir_ / "fast.cfg", "epochs = 3\nlearning_rate = 1e300\n");
  const CliRun r = cli("train --data " + q(data()) + " --config " + q(dir_ / "fast.cfg") + " --out " +
                        q(dir_ / "x.ckpt"),
                    dir_);
  EXPECT_EQ(r.code, 4) << r.err;
  EXPECT_NE(first_line(r.err).find("epoch="), std::string::npos);
  EXPECT_NE(first_line(r.err).find("batch="), std::string::npos);
}

TEST_F(CliPipeline, EvalModesReportConsistentMetrics) {
  ASSERT_EQ(cli("train --data " + q(data()) + " --config " + q(dir_ / "run.cfg") + " --out " + q(dir_ / "c.ckpt"),
                dir_)
                .code,
            0);
  const std::string base = "eval --data " + q(data()) + " --checkpoint " + q(dir_ / "c.ckpt");
  const CliRun czsl = cli(base + " --mode czsl --out " + q(dir_ / "czsl.csv") + " --per-class " + q(dir_ / "pc.csv"), dir_);
  ASSERT_EQ(czsl.code, 0) << czsl.err;
  EXPECT_EQ(czsl.out.rfind("acc ", 0), 0u);
  const CliRun gzsl = cli(base + " --mode gzsl --out " + q(dir_ / "gzsl.csv"), dir_);
  ASSERT_EQ(gzsl.code, 0) << gzsl.err;
  EXPECT_NE(gzsl.out.find("U "), std::string::npos);
  EXPECT_NE(gzsl.out.find("H "), std::string::npos);
  EXPECT_EQ(slurp(dir_ / "czsl.csv"), slurp(dir_ / "gzsl.csv"));
  EXPECT_EQ(first_line(slurp(dir_ / "czsl.csv")), "metric,value");
  EXPECT_EQ(first_line(slurp(dir_ / "pc.csv")), "class_id,split,accuracy");

  const CliRun zero = cli(base + " --alpha1 0 --alpha2 0", dir_);
  EXPECT_EQ(zero.code, 2);
  EXPECT_EQ(cli(base + " --mode both", dir_).code, 2);
}

TEST_F(CliPipeline, CheckpointDataMismatchExitsFive) {
  save_checkpoint(init_params({5, 3, 4, 2}, 1), dir_ / "wrong.ckpt");
  const CliRun r = cli("eval --data " + q(data()) + " --checkpoint " + q(dir_ / "wrong.ckpt"), dir_);
  EXPECT_EQ(r.code, 5);
  EXPECT_EQ(first_line(r.err).rfind("error: code=5 kind=shape:", 0), 0u) << r.err;
  EXPECT_EQ(cli("export-attention --data " + q(data()) + " --checkpoint " + q(dir_ / "wrong.ckpt") +
                    " --image 0 --out " + q(dir_ / "att"),
                dir_)
                .code,
            5);
}

TEST_F(CliPipeline, ExportedAttentionColumnsAreNormalized) {
  ASSERT_EQ(cli("train --data " + q(data()) + " --config " + q(dir_ / "run.cfg") + " --out " + q(dir_ / "c.ckpt"),
                dir_)
                .code,
            0);
  const std::string base = "export-attention --data " + q(data()) + " --checkpoint " + q(dir_ / "c.ckpt");
  const CliRun r = cli(base + " --image 3 --out " + q(dir_ / "att"), dir_);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto beta = read_numeric_csv(dir_ / "att" / "beta.csv");  // K×R
  const auto tau = read_numeric_csv(dir_ / "att" / "tau.csv");    // R×K
  ASSERT_EQ(beta.size(), 4u);
  ASSERT_EQ(tau.size(), 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 4; ++k) s += beta[k][r];
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
  for (std::size_t k = 0; k < 4; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < 3; ++r) s += tau[r][k];
    EXPECT_NEAR(s, 1.0, 1e-10);
  }
  EXPECT_EQ(first_line(slurp(dir_ / "att" / "scores.csv")), "attribute,psi,Psi");
  EXPECT_EQ(read_numeric_csv(dir_ / "att" / "scores.csv").size(), 4u);
  EXPECT_EQ(cli(base + " --image 30 --out " + q(dir_ / "att2"), dir_).code, 2);
  EXPECT_EQ(cli(base + " --image -1 --out " + q(dir_ / "att2"), dir_).code, 2);
}

TEST_F(CliPipeline, AblateWritesEveryVariant) {
  write_text(dir_ / "ab.cfg", "epochs = 2\nbatch_size = 6\n");
  const CliRun r = cli("ablate --data " + q(data()) + " --config " + q(dir_ / "ab.cfg") + " --out " + q(dir_ / "ab.csv"),
                    dir_);
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir_ / "ab.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "variant,acc,H");
  std::vector<std::string> names;
  while (std::getline(in, line)) names.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(names, (std::vector<std::string>{"baseline", "v2a_no_distill", "a2v_no_distill", "v2a_distill",
                                             "a2v_distill", "distill_jsd_only", "distill_l2_only", "full"}));
}

TEST(CliEval, SingleUnseenClassIsAlwaysRight) {
  TempDir dir("eval_trivial");
  Dataset ds;
  Rng rng(3);
  ds.attributes = rng_uniform(rng, -1.0, 1.0, 3, 2);
  ds.class_semantics = rng_uniform(rng, 0.0, 1.0, 3, 3);
  ds.seen_classes = {0, 1};
  ds.unseen_classes = {2};
  ds.labels = {0, 1, 0, 2, 2, 2};
  for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.features.push_back(rng_uniform(rng, -1.0, 1.0, 2, 4));
  for (Matrix* m : {&ds.attributes, &ds.class_semantics})
    for (double& x : m->data()) x = static_cast<float>(x);
  for (Matrix& m : ds.features)
    for (double& x : m.data()) x = static_cast<float>(x);
  ds.train_idx = {0, 1};
  ds.test_seen_idx = {2};
  ds.test_unseen_idx = {3, 4, 5};
  save_dataset(ds, dir / "d.zsld");
  save_checkpoint(init_params(dims_for(ds), 4), dir / "c.ckpt");
  const CliRun r = cli("eval --data " + q(dir / "d.zsld") + " --checkpoint " + q(dir / "c.ckpt") +
                        " --mode czsl --out " + q(dir / "m.csv"),
                    dir);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first_line(r.out), "acc 1");
  EXPECT_NE(slurp(dir / "m.csv").find("acc,1\n"), std::string::npos);
}

TEST(CliGradCheck, DefaultDimsPass) {
  TempDir dir("gc");
  const CliRun r = cli("grad-check", dir);
  EXPECT_EQ(r.code, 0) << r.err;
  for (const char* name : {"W1 ", "W2 ", "W3 ", "W4 ", "W_att "}) EXPECT_NE(r.out.find(name), std::string::npos);
}

TEST(CliGradCheck, TwoSeedsPass) {
  TempDir dir("gc_seeds");
  EXPECT_EQ(cli("grad-check --dims 5,4,8,6,3,2 --seed 11", dir).code, 0);
  EXPECT_EQ(cli("grad-check --dims 5,4,8,6,3,2 --seed 12", dir).code, 0);
  EXPECT_EQ(cli("grad-check --dims 3,2,4,3,2,1 --seed 13", dir).code, 0);
}

TEST(CliGradCheck, InjectedGradientBugExitsSix) {
  TempDir dir("gc_bug");
  const CliRun r = run(MSDN_GRADBUG_PATH, "grad-check", dir);
  EXPECT_EQ(r.code, 6);
  EXPECT_EQ(first_line(r.err).rfind("error: code=6 kind=gradient: W2[", 0), 0u) << r.err;
}

TEST(CliGradCheck, BadDimsAreUsageErrors) {
  TempDir dir("gc_dims");
  EXPECT_EQ(cli("grad-check --dims 5,4,8", dir).code, 2);
  EXPECT_EQ(cli("grad-check --dims 5,4,x,6,3,2", dir).code, 2);
  EXPECT_EQ(cli("grad-check --dims 5,4,8,6,3,0", dir).code, 2);
}

// Trains on noiseless synthetic data and compares, for every region of the
// first test images, the attribute with the largest attention weight against
// the attribute that generated the region.
class AttentionRecovery : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("recovery");
    write_text(*dir_ / "noiseless.spec", "noise_std = 0\n");
    write_text(*dir_ / "plain.cfg", "lambda_cal = 0\nlambda_distill = 0\n");
    ASSERT_EQ(cli("gen-data --spec " + q(*dir_ / "noiseless.spec") + " --out " + q(*dir_ / "d.zsld"), *dir_).code, 0);
    ASSERT_EQ(cli("train --data " + q(*dir_ / "d.zsld") + " --out " + q(*dir_ / "default.ckpt"), *dir_).code, 0);
    ASSERT_EQ(cli("train --data " + q(*dir_ / "d.zsld") + " --config " + q(*dir_ / "plain.cfg") + " --out " +
                      q(*dir_ / "plain.ckpt"),
                  *dir_)
                  .code,
              0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  // Fraction of regions whose argmax attribute matches the generator, using
  // tau rows (region → attributes) or beta columns.
  static double agreement(const std::string& checkpoint, bool use_tau) {
    const Dataset ds = load_dataset(*dir_ / "d.zsld");
    const Tensor* picks = find_tensor(ds.extras, kRegionAttributesTensor);
    const std::size_t regions = ds.num_regions(), attributes = ds.num_attributes();
    std::size_t hits = 0, total = 0;
    for (std::size_t n = 0; n < 40; ++n) {
      const int image = ds.test_unseen_idx[n * 5];
      const fs::path out = *dir_ / ("att_" + std::to_string(image));
      const CliRun r = cli("export-attention --data " + q(*dir_ / "d.zsld") + " --checkpoint " + q(*dir_ / checkpoint) +
                            " --image " + std::to_string(image) + " --out " + q(out),
                        *dir_);
      EXPECT_EQ(r.code, 0) << r.err;
      const auto beta = read_numeric_csv(out / "beta.csv");
      const auto tau = read_numeric_csv(out / "tau.csv");
      for (std::size_t reg = 0; reg < regions; ++reg) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < attributes; ++k) {
          const double cand = use_tau ? tau[reg][k] : beta[k][reg];
          const double cur = use_tau ? tau[reg][best] : beta[best][reg];
          if (cand > cur) best = k;
        }
        hits += static_cast<int>(best) == picks->ints[image * regions + reg];
        ++total;
      }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
  }

  static TempDir* dir_;
};

TempDir* AttentionRecovery::dir_ = nullptr;

TEST_F(AttentionRecovery, TauArgmaxMatchesGeneratingAttribute) {
  const double a = agreement("default.ckpt", true);
  RecordProperty("agreement", std::to_string(a));
  EXPECT_GE(a, 0.70) << "agreement " << a;
}

TEST_F(AttentionRecovery, BetaArgmaxMatchesGeneratingAttribute) {
  const double a = agreement("plain.ckpt", false);
  RecordProperty("agreement", std::to_string(a));
  EXPECT_GE(a, 0.50) << "agreement " << a;
}

}  // namespace
}  // namespace msdn
