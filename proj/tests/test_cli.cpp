#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rrwkv/cli.hpp"

using namespace rrwkv;
namespace fs = std::filesystem;

namespace {

// Fresh directory per test under the system temp dir.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("rrwkv_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig quick(const fs::path& out) {
  RunConfig cfg;
  cfg.set("out_dir", out.string());
  return cfg;
}

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(RRWKV_CLI_PATH) + " " + args + " >" + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(RunConfig, DefaultsAndEcho) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.get_uint("d"), 8u);
  EXPECT_EQ(cfg.raw("variant"), "rrwkv");
  EXPECT_EQ(cfg.get_uint_list("bench_n"), (std::vector<std::size_t>{128, 256, 512, 1024, 2048}));
  const std::string echo = cfg.echo();
  EXPECT_EQ(echo.substr(0, 6), "d = 8\n");
  std::size_t lines = 0;
  for (char c : echo) lines += c == '\n';
  EXPECT_EQ(lines, config_schema().size());
}

TEST(RunConfig, ParsesFlatText) {
  RunConfig cfg;
  cfg.merge_text("# model\n d = 32 \n\nvariant=rwkv  # trailing comment\nlr = 1e-3\nbench_archs = rwkv, attention\n");
  EXPECT_EQ(cfg.get_uint("d"), 32u);
  EXPECT_EQ(cfg.model_config().variant, Variant::rwkv);
  EXPECT_DOUBLE_EQ(cfg.get_real("lr"), 1e-3);
  EXPECT_EQ(cfg.get_arch_list("bench_archs"), (std::vector<Arch>{Arch::rwkv, Arch::attention}));
  cfg.merge_assignment("seed=7");
  EXPECT_EQ(cfg.get_uint("seed"), 7u);
}

TEST(RunConfig, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  const auto key_of = [&](const std::string& text) {
    try {
      cfg.merge_text(text);
    } catch (const SchemaError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(key_of("widht = 8"), "widht");
  EXPECT_EQ(key_of("d = eight"), "d");
  EXPECT_EQ(key_of("d = -3"), "d");
  EXPECT_EQ(key_of("lr = fast"), "lr");
  EXPECT_EQ(key_of("variant = lstm"), "variant");
  EXPECT_EQ(key_of("bench_archs = rwkv,gru"), "bench_archs");
  EXPECT_EQ(key_of("bench_n = 1,x"), "bench_n");
  EXPECT_THROW(cfg.merge_text("just words"), SchemaError);

  RunConfig ranges;
  ranges.set("d", "0");
  EXPECT_THROW(ranges.model_config(), SchemaError);
  ranges = RunConfig{};
  ranges.set("gap", "30");
  try {
    ranges.task_spec();
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.key(), "gap");
  }
  ranges = RunConfig{};
  ranges.set("bench_n", "8,16,32");
  EXPECT_THROW(ranges.bench_config(), SchemaError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  TempDir dir;
  ModelConfig mc;
  mc.d = 6;
  mc.vocab = 9;
  mc.medium.s = 3;
  mc.medium.c_max = 16;
  mc.medium.medium = MediumMode::gated_pool;
  const Model m = Model::init(mc, 42);
  save_checkpoint(m, dir.path() / "ck.txt");
  EXPECT_FALSE(fs::exists(dir.path() / "ck.txt.tmp"));
  const Model back = load_checkpoint(dir.path() / "ck.txt", mc);
  EXPECT_TRUE(back.config == mc);
  const std::vector<int> ids{1, 8, 3, 3, 0, 5, 7, 2, 4, 6};
  EXPECT_EQ(model_forward(back, ids), model_forward(m, ids));
  std::vector<double> a, b;
  Model::visit(m, [&](const std::string&, const auto& t) { for (double x : values_of(t)) a.push_back(x); });
  Model::visit(back, [&](const std::string&, const auto& t) { for (double x : values_of(t)) b.push_back(x); });
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, TruncatedFileFails) {
  ModelConfig mc;
  mc.d = 4;
  std::ostringstream os;
  write_checkpoint(os, Model::init(mc, 1));
  const std::string full = os.str();
  for (std::size_t cut : {full.size() / 3, full.size() / 2, full.size() - 5}) {
    std::istringstream in(full.substr(0, cut));
    EXPECT_THROW(read_checkpoint(in), CheckpointError) << cut;
  }
  std::istringstream empty("");
  EXPECT_THROW(read_checkpoint(empty), CheckpointError);
}

TEST(Checkpoint, VersionAndShapeMismatchesNameTheProblem) {
  ModelConfig mc;
  mc.d = 4;
  std::ostringstream os;
  write_checkpoint(os, Model::init(mc, 1));
  std::string text = os.str();

  std::istringstream v2("rrwkv-checkpoint v2" + text.substr(text.find('\n')));
  EXPECT_THROW(read_checkpoint(v2), CheckpointError);

  std::string bad_shape = text;
  const auto at = bad_shape.find("param embedding 16 4");
  ASSERT_NE(at, std::string::npos);
  bad_shape.replace(at, 20, "param embedding 16 5");
  std::istringstream in(bad_shape);
  try {
    read_checkpoint(in);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("embedding"), std::string::npos);
  }
}

TEST(Checkpoint, VariantMismatchIsExplicit) {
  TempDir dir;
  ModelConfig plain;
  plain.variant = Variant::rwkv;
  save_checkpoint(Model::init(plain, 3), dir.path() / "ck.txt");
  ModelConfig rr = plain;
  rr.variant = Variant::rrwkv;
  try {
    load_checkpoint(dir.path() / "ck.txt", rr);
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("variant=rwkv"), std::string::npos);
  }
}

TEST(Commands, PathlenChain) {
  TempDir dir;
  RunConfig cfg = quick(dir.path());
  cfg.set("variant", "rwkv");
  cfg.set("pathlen_n", "10");
  std::ostringstream log, err;
  ASSERT_EQ(run_command("pathlen", cfg, log, err), 0) << err.str();
  EXPECT_EQ(slurp(dir.path() / "pathlen.csv"), "arch,n,s,max_path\nrwkv,10,0,9\n");
  EXPECT_EQ(slurp(dir.path() / "config.resolved"), cfg.echo());
  EXPECT_FALSE(fs::exists(dir.path() / ".lock"));
}

TEST(Commands, GradcheckOnTinyModel) {
  TempDir dir;
  RunConfig cfg = quick(dir.path());
  cfg.set("gradcheck_seeds", "2");
  cfg.set("gradcheck_seq_len", "8");
  std::ostringstream log, err;
  EXPECT_EQ(run_command("gradcheck", cfg, log, err), 0) << err.str();
  const std::string csv = slurp(dir.path() / "gradreport.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "parameter,analytic,numeric,rel_error");
  EXPECT_NE(csv.find("layers.1.squeeze.w_m"), std::string::npos);
}

TEST(Commands, TrainThenEvalIsDeterministic) {
  TempDir dir;
  std::string metrics[2];
  for (int run = 0; run < 2; ++run) {
    RunConfig cfg = quick(dir.path() / ("run" + std::to_string(run)));
    cfg.merge_text("steps = 10\nbatch = 4\neval_interval = 5\neval_size = 8\nprobe_size = 2\nseq_len = 12\ngap = 4\n");
    std::ostringstream log, err;
    ASSERT_EQ(run_command("train", cfg, log, err), 0) << err.str();
    metrics[run] = slurp(dir.path() / ("run" + std::to_string(run)) / "metrics.csv");
    EXPECT_TRUE(fs::exists(dir.path() / ("run" + std::to_string(run)) / "probe.csv"));
  }
  EXPECT_EQ(metrics[0], metrics[1]);
  EXPECT_EQ(slurp(dir.path() / "run0" / "checkpoint.txt"), slurp(dir.path() / "run1" / "checkpoint.txt"));

  RunConfig eval = quick(dir.path() / "eval");
  eval.merge_text("eval_size = 8\nseq_len = 12\ngap = 4\n");
  eval.set("checkpoint", (dir.path() / "run0" / "checkpoint.txt").string());
  std::ostringstream log, err;
  ASSERT_EQ(run_command("eval", eval, log, err), 0) << err.str();
  EXPECT_EQ(slurp(dir.path() / "eval" / "eval.csv").substr(0, 14), "loss,accuracy\n");

  eval.set("variant", "rwkv");
  EXPECT_EQ(run_command("eval", eval, log, err), 1);
  EXPECT_NE(err.str().find("mismatch"), std::string::npos);
}

TEST(Commands, LockedDirectoryIsRefused) {
  TempDir dir;
  RunConfig cfg = quick(dir.path());
  cfg.set("pathlen_n", "8");
  std::ostringstream log, err;
  {
    DirLock held(dir.path());
    EXPECT_EQ(run_command("pathlen", cfg, log, err), 1);
    EXPECT_NE(err.str().find("in use"), std::string::npos);
  }
  EXPECT_EQ(run_command("pathlen", cfg, log, err), 0);
}

TEST(Commands, OutputDirectoryResolution) {
  RunConfig cfg;
  ::unsetenv(kOutDirEnv);
  EXPECT_EQ(resolve_out_dir(cfg, "bench"), fs::path("runs") / "bench");
  ::setenv(kOutDirEnv, "/tmp/somewhere", 1);
  EXPECT_EQ(resolve_out_dir(cfg, "bench"), fs::path("/tmp/somewhere") / "bench");
  cfg.set("out_dir", "/tmp/explicit");
  EXPECT_EQ(resolve_out_dir(cfg, "bench"), fs::path("/tmp/explicit"));
  ::unsetenv(kOutDirEnv);
}

TEST(Commands, SchemaErrorsExitTwo) {
  TempDir dir;
  RunConfig cfg = quick(dir.path());
  cfg.set("bench_n", "8,16");
  std::ostringstream log, err;
  EXPECT_EQ(run_command("bench", cfg, log, err), 2);
  EXPECT_NE(err.str().find("bench_n"), std::string::npos);
  EXPECT_EQ(run_command("fly", cfg, log, err), 2);
}

TEST(Executable, ExitStatuses) {
  TempDir dir;
  const fs::path out = dir.path() / "out.txt";
  EXPECT_EQ(run_cli("pathlen --set widht=8 --out " + dir.path().string(), out), 2);
  EXPECT_NE(slurp(out).find("widht"), std::string::npos);
  EXPECT_EQ(run_cli("pathlen --set variant=rwkv --set pathlen_n=10 --out " + (dir.path() / "p").string(), out), 0);
  EXPECT_EQ(slurp(dir.path() / "p" / "pathlen.csv"), "arch,n,s,max_path\nrwkv,10,0,9\n");
  EXPECT_EQ(run_cli("", out), 2);
  EXPECT_EQ(run_cli("--list-keys", out), 0);
  EXPECT_NE(slurp(out).find("mapping_mode = causal"), std::string::npos);

  std::ofstream(dir.path() / "run.conf") << "# tiny\npathlen_n = 4\npathlen_archs = attention\n";
  EXPECT_EQ(run_cli("pathlen --config " + (dir.path() / "run.conf").string() + " --out " + (dir.path() / "q").string(),
                    out),
            0);
  EXPECT_EQ(slurp(dir.path() / "q" / "pathlen.csv"), "arch,n,s,max_path\nattention,4,0,1\n");
}
