#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

// Drives the installed binary end to end: config plumbing, artifact layout,
// failure exit codes, and the byte-identical rerun contract.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static std::string bin_;
  static fs::path root_;
  static fs::path teacher_ckpt_;
  static fs::path student_ckpt_;

  static void SetUpTestSuite() {
    const char* bin = std::getenv("DOORLAB_CLI");
    ASSERT_NE(bin, nullptr) << "DOORLAB_CLI must point at the binary";
    bin_ = bin;
    root_ = fs::path("cli_scratch");
    fs::remove_all(root_);
    fs::create_directories(root_);

    write_small_config(root_ / "small.json");
    CmdResult t = run("train-teacher --config small.json --seed 11 "
                      "--out runs --name t0");
    ASSERT_EQ(t.exit_code, 0) << t.err;
    teacher_ckpt_ = root_ / "runs" / "t0" / "teacher.ckpt";
    CmdResult s = run("train-student --teacher runs/t0/teacher.ckpt "
                      "--config small.json --seed 12 --out runs --name s0");
    ASSERT_EQ(s.exit_code, 0) << s.err;
    student_ckpt_ = root_ / "runs" / "s0" / "student.ckpt";
  }

  static void write_small_config(const fs::path& p) {
    json j;
    j["env"] = {{"n_envs", 4}, {"episode_len", 30}};
    j["ppo"] = {{"total_env_steps", 800},
                {"rollout_len", 10},
                {"snapshot_interval", 5}};
    j["distill"] = {{"total_env_steps", 480}, {"window", 15}};
    j["eval"] = {{"n_envs", 4}, {"episodes_per_env", 1}};
    std::ofstream f(p);
    f << j.dump(2) << '\n';
  }

  // runs inside the scratch root so relative paths stay contained
  static CmdResult run(const std::string& args) {
    std::string cmd = "cd " + root_.string() + " && " + bin_ + " " + args +
                      " > .cli_out 2> .cli_err";
    int rc = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(root_ / ".cli_out");
    r.err = slurp(root_ / ".cli_err");
    return r;
  }
};

std::string CliTest::bin_;
fs::path CliTest::root_;
fs::path CliTest::teacher_ckpt_;
fs::path CliTest::student_ckpt_;

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') n += 1;
  return n;
}

}  // namespace

TEST_F(CliTest, PrintConfigRoundTripIsIdentity) {
  CmdResult a = run("print-config");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  {
    std::ofstream f(root_ / "dumped.json", std::ios::binary);
    f << a.out;
  }
  CmdResult b = run("print-config --config dumped.json");
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(a.out, b.out);

  // all eight sections plus the three scalars are visible with defaults
  json j = json::parse(a.out);
  for (const char* k : {"seed", "out_dir", "run_name", "env", "randomization",
                        "reward", "robot", "door", "ppo", "distill", "eval"})
    EXPECT_TRUE(j.contains(k)) << k;
}

TEST_F(CliTest, UnknownKeysAndBadValuesExitTwo) {
  {
    std::ofstream f(root_ / "bad_key.json");
    f << R"({"ppo": {"leaning_rate": 0.01}})" << '\n';
  }
  CmdResult r = run("print-config --config bad_key.json");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("leaning_rate"), std::string::npos) << r.err;

  CmdResult s = run("print-config --set reward.nope=1");
  EXPECT_EQ(s.exit_code, 2);

  {
    std::ofstream f(root_ / "broken.json");
    f << "{ not json";
  }
  CmdResult t = run("print-config --config broken.json");
  EXPECT_EQ(t.exit_code, 2);
  EXPECT_EQ(count_lines(t.err), 1) << t.err;

  CmdResult u = run("print-config --set env.n_envs=0");
  EXPECT_EQ(u.exit_code, 2);
}

TEST_F(CliTest, SetOverridesReachNestedValues) {
  CmdResult r = run(
      "print-config --set ppo.lr=0.01 --set door.opening_dir=pull "
      "--set randomization.tau_hinge=[5,9] --set seed=42");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["ppo"]["lr"].get<double>(), 0.01);
  EXPECT_EQ(j["door"]["opening_dir"], "pull");
  EXPECT_EQ(j["randomization"]["tau_hinge"][0].get<double>(), 5.0);
  EXPECT_EQ(j["randomization"]["tau_hinge"][1].get<double>(), 9.0);
  EXPECT_EQ(j["seed"].get<std::uint64_t>(), 42u);
}

TEST_F(CliTest, FreezePinsRangesToMidpointsAndZeroesMixtures) {
  CmdResult r = run("print-config --freeze dynamics");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  json j = json::parse(r.out);
  EXPECT_DOUBLE_EQ(j["randomization"]["tau_hinge"][0].get<double>(), 15.0);
  EXPECT_DOUBLE_EQ(j["randomization"]["tau_hinge"][1].get<double>(), 15.0);
  EXPECT_DOUBLE_EQ(j["randomization"]["mass"][0].get<double>(), 45.0);
  EXPECT_DOUBLE_EQ(j["randomization"]["tau_hinge_zero_prob"].get<double>(),
                   0.0);
  // geometry untouched
  EXPECT_DOUBLE_EQ(j["randomization"]["d_w"][0].get<double>(), 0.8);

  CmdResult bad = run("print-config --freeze nonsense");
  EXPECT_EQ(bad.exit_code, 2);
}

TEST_F(CliTest, TeacherRunWritesArtifactsAndRerunsByteIdentical) {
  for (const char* f :
       {"config.json", "obs_layout.json", "teacher_curves.jsonl",
        "teacher.ckpt", "best.ckpt"})
    EXPECT_TRUE(fs::exists(root_ / "runs" / "t0" / f)) << f;

  json layout = json::parse(slurp(root_ / "runs" / "t0" / "obs_layout.json"));
  EXPECT_EQ(layout["layout_version"], "obs-layout-v1");
  EXPECT_EQ(layout["teacher_dim"].get<int>(), 46);
  EXPECT_EQ(layout["student_index_map"].size(), 19u);

  CmdResult again = run("train-teacher --config small.json --seed 11 "
                        "--out runs --name t0_again");
  ASSERT_EQ(again.exit_code, 0) << again.err;
  EXPECT_EQ(slurp(root_ / "runs" / "t0" / "teacher_curves.jsonl"),
            slurp(root_ / "runs" / "t0_again" / "teacher_curves.jsonl"));
  EXPECT_EQ(slurp(root_ / "runs" / "t0" / "teacher.ckpt"),
            slurp(root_ / "runs" / "t0_again" / "teacher.ckpt"));

  // first data line carries the losses; header carries the provenance
  std::ifstream curves(root_ / "runs" / "t0" / "teacher_curves.jsonl");
  std::string line;
  std::getline(curves, line);
  json header = json::parse(line);
  EXPECT_TRUE(header.contains("config_hash"));
  EXPECT_EQ(header["seed"].get<int>(), 11);
  EXPECT_EQ(header["layout_version"], "obs-layout-v1");
  std::getline(curves, line);
  json rec = json::parse(line);
  for (const char* k : {"step", "policy_loss", "value_loss", "entropy",
                        "opened_rate", "passed_rate"})
    EXPECT_TRUE(rec.contains(k)) << k;
}

TEST_F(CliTest, StudentCurvesCarryTheThreeLossColumns) {
  std::ifstream curves(root_ / "runs" / "s0" / "student_curves.jsonl");
  std::string line;
  std::getline(curves, line);  // header
  std::getline(curves, line);
  json rec = json::parse(line);
  ASSERT_EQ(rec.size(), 4u) << rec.dump();
  for (const char* k : {"step", "imitation", "estimation", "door_type"})
    EXPECT_TRUE(rec.contains(k)) << k;

  CmdResult again = run("train-student --teacher runs/t0/teacher.ckpt "
                        "--config small.json --seed 12 --out runs --name s0b");
  ASSERT_EQ(again.exit_code, 0) << again.err;
  EXPECT_EQ(slurp(root_ / "runs" / "s0" / "student_curves.jsonl"),
            slurp(root_ / "runs" / "s0b" / "student_curves.jsonl"));

  CmdResult mlp = run("train-student --teacher runs/t0/teacher.ckpt "
                      "--config small.json --seed 12 --out runs --name s0m "
                      "--ablate mlp");
  ASSERT_EQ(mlp.exit_code, 0) << mlp.err;
  json md = json::parse(slurp(root_ / "runs" / "s0m" / "student_curves.jsonl")
                            .substr(0, 200)
                            .substr(0, slurp(root_ / "runs" / "s0m" /
                                             "student_curves.jsonl")
                                            .find('\n')));
  EXPECT_TRUE(md.contains("config_hash"));
}

TEST_F(CliTest, EvalGridEmbedsProvenanceAndRerunsByteIdentical) {
  CmdResult a = run("eval --ckpt runs/s0/student.ckpt --config small.json "
                    "--seed 21 --out runs --name ev_a");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  std::string grid = slurp(root_ / "runs" / "ev_a" / "grid.csv");
  EXPECT_NE(grid.find("# config_hash="), std::string::npos);
  EXPECT_NE(grid.find("seed=21"), std::string::npos);
  EXPECT_NE(grid.find("layout_version=obs-layout-v1"), std::string::npos);
  EXPECT_EQ(count_lines(grid), 6);  // banner + columns + 4 types
  EXPECT_NE(a.out.find("push-right"), std::string::npos);

  CmdResult b = run("eval --ckpt runs/s0/student.ckpt --config small.json "
                    "--seed 21 --out runs --name ev_b");
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(grid, slurp(root_ / "runs" / "ev_b" / "grid.csv"));

  CmdResult rep = run("eval --ckpt runs/t0/teacher.ckpt --config small.json "
                      "--protocol repeatability --set eval.repeat_trials=2 "
                      "--seed 22 --out runs --name ev_rep");
  ASSERT_EQ(rep.exit_code, 0) << rep.err;
  EXPECT_EQ(count_lines(slurp(root_ / "runs" / "ev_rep" /
                              "repeatability.csv")),
            4);  // banner + columns + both sides

  CmdResult bad = run("eval --ckpt runs/s0/student.ckpt --config small.json "
                      "--protocol nonsense --out runs --name ev_bad");
  EXPECT_EQ(bad.exit_code, 2);
}

TEST_F(CliTest, SweepWritesOneRowPerLevel) {
  CmdResult r = run("sweep --ckpt runs/t0/teacher.ckpt --config small.json "
                    "--resistances 0,25,50 --seed 23 --out runs --name sw_a");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  std::string csv = slurp(root_ / "runs" / "sw_a" / "sweep.csv");
  EXPECT_EQ(count_lines(csv), 5);  // banner + columns + 3 levels
  EXPECT_NE(r.out.find("non-increasing within one CI width"),
            std::string::npos);
}

TEST_F(CliTest, ExportsRequireAStudentCheckpoint) {
  CmdResult h = run("export-hidden --ckpt runs/s0/student.ckpt "
                    "--config small.json --episodes 2 --seed 31 "
                    "--out runs --name ex_h");
  ASSERT_EQ(h.exit_code, 0) << h.err;
  std::string hidden = slurp(root_ / "runs" / "ex_h" / "hidden.csv");
  EXPECT_EQ(count_lines(hidden), 62);  // banner + columns + 2 x 30 steps
  EXPECT_EQ(count_lines(slurp(root_ / "runs" / "ex_h" / "hidden_pca.csv")),
            62);

  CmdResult p = run("export-type-probs --ckpt runs/s0/student.ckpt "
                    "--config small.json --episodes 2 --seed 31 "
                    "--out runs --name ex_p");
  ASSERT_EQ(p.exit_code, 0) << p.err;
  std::string probs = slurp(root_ / "runs" / "ex_p" / "type_probs.csv");
  EXPECT_EQ(count_lines(probs), 62);
  EXPECT_NE(p.out.find("door type accuracy"), std::string::npos);

  CmdResult wrong = run("export-hidden --ckpt runs/t0/teacher.ckpt "
                        "--config small.json --out runs --name ex_w");
  EXPECT_EQ(wrong.exit_code, 3);
  EXPECT_NE(wrong.err.find("student"), std::string::npos);
}

TEST_F(CliTest, CheckpointFailureClassesExitThree) {
  CmdResult missing = run("eval --ckpt does_not_exist.ckpt "
                          "--config small.json --out runs --name m1");
  EXPECT_EQ(missing.exit_code, 3);
  EXPECT_NE(missing.err.find("checkpoint not found"), std::string::npos);
  EXPECT_EQ(count_lines(missing.err), 1) << missing.err;

  CmdResult kind = run("train-student --teacher runs/s0/student.ckpt "
                       "--config small.json --out runs --name m2");
  EXPECT_EQ(kind.exit_code, 3);

  {
    std::ofstream f(root_ / "garbage.ckpt", std::ios::binary);
    f << "not a checkpoint at all";
  }
  CmdResult garbage = run("eval --ckpt garbage.ckpt --config small.json "
                          "--out runs --name m3");
  EXPECT_EQ(garbage.exit_code, 3);
}

TEST_F(CliTest, DivergentTrainingExitsFour) {
  CmdResult r = run("train-teacher --config small.json --set ppo.lr=1e25 "
                    "--set ppo.total_env_steps=80 --out runs --name nan");
  EXPECT_EQ(r.exit_code, 4);
  EXPECT_NE(r.err.find("nan abort"), std::string::npos);
  EXPECT_EQ(count_lines(r.err), 1) << r.err;
}

TEST_F(CliTest, ReplayReproducesTheTraceExactly) {
  {
    std::ofstream f(root_ / "acts.csv");
    f << "# scripted probe\n";
    for (int t = 0; t < 40; ++t) {
      for (int i = 0; i < 9; ++i)
        f << (i ? "," : "") << 0.1 * ((t + i) % 7 - 3);
      f << '\n';
    }
  }
  CmdResult a = run("replay --actions acts.csv --config small.json "
                    "--seed 41 --out runs --name rp_a");
  ASSERT_EQ(a.exit_code, 0) << a.err;
  std::string trace = slurp(root_ / "runs" / "rp_a" / "trace.csv");
  EXPECT_EQ(count_lines(trace), 32);  // banner + columns + 30 (one horizon)

  CmdResult b = run("replay --actions acts.csv --config small.json "
                    "--seed 41 --out runs --name rp_b");
  ASSERT_EQ(b.exit_code, 0) << b.err;
  EXPECT_EQ(trace, slurp(root_ / "runs" / "rp_b" / "trace.csv"));

  CmdResult noacts = run("replay --actions nothere.csv --config small.json "
                         "--out runs --name rp_c");
  EXPECT_EQ(noacts.exit_code, 2);
}

TEST_F(CliTest, ConcurrentRunsIntoOneDirectoryAreRefused) {
  fs::create_directories(root_ / "runs" / "busy");
  {
    std::ofstream f(root_ / "runs" / "busy" / ".lock");
    f << "";
  }
  CmdResult r = run("replay --actions acts.csv --config small.json "
                    "--out runs --name busy");
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.err.find("locked"), std::string::npos);
  fs::remove(root_ / "runs" / "busy" / ".lock");

  // a clean run removes its lock so the directory can be reused
  CmdResult ok = run("replay --actions acts.csv --config small.json "
                     "--out runs --name busy");
  EXPECT_EQ(ok.exit_code, 0) << ok.err;
  EXPECT_FALSE(fs::exists(root_ / "runs" / "busy" / ".lock"));
}
