#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cslab/container.hpp"

using namespace cslab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cslab_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

// Runs the installed binary; returns the process exit code (-1 if it did not
// exit normally). stdout/stderr land in <dir>/last_out.txt.
int run_cli(const TempDir& dir, const std::string& args) {
  const std::string cmd = std::string(CSLAB_CLI) + " " + args + " > " +
                          dir.file("last_out.txt") + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// CSV contents minus the "# generated=<timestamp>" preamble line.
std::string csv_without_timestamp(const std::string& path) {
  std::istringstream in(slurp(path));
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("# generated=", 0) != 0) out += line + "\n";
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

const char* kSmallConfig = R"([ensemble]
m = 16
n = 32
s = 3
test_size = 100

[model]
kind = "alista"
k_steps = 4

[train]
epochs = 3
samples_per_epoch = 128
batch_size = 32
learning_rate = 5e-3

[diagnose]
pair_i = [2]
pair_j = [4]
proxy_samples = 300
)";

struct Pipeline {
  TempDir dir;
  std::string cfg;
  std::string out;

  explicit Pipeline(const std::string& extra = "", const std::string& base = kSmallConfig) {
    cfg = dir.file("cfg.toml");
    out = dir.file("out");
    write_file(cfg, base + extra);
  }
  int run(const std::string& sub, const std::string& extra = "") {
    return run_cli(dir, sub + " --config " + cfg + " --out " + out + extra);
  }
  std::string artifact(const std::string& name) const { return out + "/" + name; }
};

}  // namespace

TEST_CASE("gen-data is idempotent and refuses silent overwrite") {
  Pipeline p;
  CHECK(p.run("gen-data") == 0);
  const std::string first = slurp(p.artifact("dataset.csl"));
  CHECK(p.run("gen-data") == 0);
  CHECK(slurp(p.artifact("dataset.csl")) == first);

  // different ensemble into the same directory: refused without --force
  const std::string other = p.dir.file("other.toml");
  write_file(other, "[ensemble]\nm = 8\nn = 20\ns = 2\ntest_size = 50\n");
  CHECK(run_cli(p.dir, "gen-data --config " + other + " --out " + p.out) == 1);
  CHECK(slurp(p.artifact("dataset.csl")) == first);
  CHECK(run_cli(p.dir, "gen-data --config " + other + " --out " + p.out + " --force") == 0);
  CHECK(slurp(p.artifact("dataset.csl")) != first);
}

TEST_CASE("pipeline is reproducible: bodies and checkpoints byte-identical") {
  Pipeline a;
  Pipeline b;
  for (Pipeline* p : {&a, &b}) {
    REQUIRE(p->run("gen-data") == 0);
    REQUIRE(p->run("compute-dict") == 0);
    REQUIRE(p->run("train") == 0);
    REQUIRE(p->run("eval") == 0);
    REQUIRE(p->run("diagnose") == 0);
  }
  for (const char* f : {"dataset.csl", "dictionary.csl", "checkpoint_alista.csl"})
    CHECK(slurp(a.artifact(f)) == slurp(b.artifact(f)));
  for (const char* f : {"train_curve_alista.csv", "eval.csv", "correlations.csv",
                        "iterations.csv", "assumption_ratio.csv", "pair_correlations.csv"})
    CHECK(csv_without_timestamp(a.artifact(f)) == csv_without_timestamp(b.artifact(f)));
  for (const char* f : {"eval.json", "iterations.json"})
    CHECK(slurp(a.artifact(f)) == slurp(b.artifact(f)));
}

TEST_CASE("eval does not modify inputs and reports baselines plus checkpoint") {
  Pipeline p;
  REQUIRE(p.run("gen-data") == 0);
  REQUIRE(p.run("compute-dict") == 0);
  REQUIRE(p.run("train") == 0);
  const std::string ds = slurp(p.artifact("dataset.csl"));
  const std::string dict = slurp(p.artifact("dictionary.csl"));
  const std::string ck = slurp(p.artifact("checkpoint_alista.csl"));

  REQUIRE(p.run("eval") == 0);
  CHECK(slurp(p.artifact("dataset.csl")) == ds);
  CHECK(slurp(p.artifact("dictionary.csl")) == dict);
  CHECK(slurp(p.artifact("checkpoint_alista.csl")) == ck);

  const std::string body = csv_without_timestamp(p.artifact("eval.csv"));
  CHECK(body.find("zero,") != std::string::npos);
  CHECK(body.find("ista,") != std::string::npos);
  CHECK(body.find("fista,") != std::string::npos);
  CHECK(body.find("alista,both,4,checkpoint") != std::string::npos);
}

TEST_CASE("train refuses to clobber a checkpoint without --force") {
  Pipeline p;
  REQUIRE(p.run("gen-data") == 0);
  REQUIRE(p.run("compute-dict") == 0);
  REQUIRE(p.run("train") == 0);
  CHECK(p.run("train") == 1);
  CHECK(p.run("train", " --force") == 0);
}

TEST_CASE("exit codes separate usage errors from runtime failures") {
  Pipeline p;
  CHECK(run_cli(p.dir, "") == 1);                       // no subcommand
  CHECK(run_cli(p.dir, "eval --no-such-flag") == 1);    // unknown flag
  CHECK(run_cli(p.dir, "--help") == 0);
  CHECK(p.run("train") == 1);  // no dataset yet: actionable config error

  const std::string bad = p.dir.file("bad.toml");
  write_file(bad, "[ensemble]\nm = \"many\"\n");
  CHECK(run_cli(p.dir, "gen-data --config " + bad + " --out " + p.out) == 1);

  write_file(bad, "[ensemble]\nm = 64\nn = 32\n");  // m > n
  CHECK(run_cli(p.dir, "gen-data --config " + bad + " --out " + p.out) == 1);

  // dataset generated for another ensemble: detected at load, runtime failure
  REQUIRE(p.run("gen-data") == 0);
  const std::string other = p.dir.file("other.toml");
  write_file(other, "[ensemble]\nm = 8\nn = 20\ns = 2\ntest_size = 50\n");
  CHECK(run_cli(p.dir, "train --config " + other + " --out " + p.out) == 2);
}

TEST_CASE("seed override changes the trained checkpoint but not the dataset") {
  Pipeline p;
  REQUIRE(p.run("gen-data") == 0);
  REQUIRE(p.run("compute-dict") == 0);
  REQUIRE(p.run("train", " --seed 5") == 0);
  const std::string ck5 = slurp(p.artifact("checkpoint_alista.csl"));
  const std::string ds = slurp(p.artifact("dataset.csl"));
  REQUIRE(p.run("train", " --seed 6 --force") == 0);
  CHECK(slurp(p.artifact("checkpoint_alista.csl")) != ck5);
  CHECK(p.run("gen-data") == 0);  // dataset still matches the config
  CHECK(slurp(p.artifact("dataset.csl")) == ds);

  const Container c = load_container(p.artifact("checkpoint_alista.csl"));
  CHECK(c.meta.at("seed").get<std::uint64_t>() == 6);
}

TEST_CASE("ablation trains all three gate-input variants") {
  Pipeline p("", R"([ensemble]
m = 16
n = 32
s = 3
test_size = 100

[model]
kind = "na-alista"
k_steps = 4
hidden = 6

[train]
epochs = 3
samples_per_epoch = 128
batch_size = 32
learning_rate = 5e-3
ablation = true

[diagnose]
pair_i = [2]
pair_j = [4]
proxy_samples = 300
)");
  REQUIRE(p.run("gen-data") == 0);
  REQUIRE(p.run("compute-dict") == 0);
  REQUIRE(p.run("train") == 0);
  for (const char* f : {"checkpoint_na-alista_residual.csl", "checkpoint_na-alista_update.csl",
                        "checkpoint_na-alista_both.csl"})
    CHECK(fs::exists(p.artifact(f)));
  const std::string body = csv_without_timestamp(p.artifact("ablation.csv"));
  CHECK(body.find("residual,") != std::string::npos);
  CHECK(body.find("update,") != std::string::npos);
  CHECK(body.find("both,") != std::string::npos);

  // eval picks the ablation checkpoints up alongside the baselines
  REQUIRE(p.run("eval") == 0);
  const std::string eval_body = csv_without_timestamp(p.artifact("eval.csv"));
  CHECK(eval_body.find("na-alista,residual,4,checkpoint") != std::string::npos);
  CHECK(eval_body.find("na-alista,update,4,checkpoint") != std::string::npos);
  CHECK(eval_body.find("na-alista,both,4,checkpoint") != std::string::npos);
}

TEST_CASE("sweep keeps completed rows when one point fails") {
  Pipeline p(R"(
[sweep]
axis = "N"
values = [8, 32]
models = ["ista", "alista"]
seeds = [1]
)");
  // N = 8 < m = 16 is rejected per point; N = 32 trains fine
  CHECK(p.run("sweep") == 2);
  const std::string body = csv_without_timestamp(p.artifact("sweep.csv"));
  CHECK(body.find("32,ista,1,") != std::string::npos);
  CHECK(body.find("32,alista,1,") != std::string::npos);
  CHECK(body.find("8,ista") == std::string::npos);
  const std::string sidecar = slurp(p.artifact("sweep.json"));
  CHECK(sidecar.find("N=8") != std::string::npos);
  CHECK(sidecar.find("requires m <= n") != std::string::npos);
}

TEST_CASE("diagnose falls back to an untrained model and flags config drift") {
  Pipeline p;
  REQUIRE(p.run("gen-data") == 0);
  REQUIRE(p.run("compute-dict") == 0);
  REQUIRE(p.run("diagnose") == 0);
  std::string out = slurp(p.dir.file("last_out.txt"));
  CHECK(out.find("untrained") != std::string::npos);
  CHECK(fs::exists(p.artifact("correlations.csv")));
  CHECK(fs::exists(p.artifact("pair_correlations.csv")));

  // a checkpoint from a different configuration is rejected by hash
  REQUIRE(p.run("train") == 0);
  REQUIRE(p.run("diagnose") == 0);
  out = slurp(p.dir.file("last_out.txt"));
  CHECK(out.find("checkpoint") != std::string::npos);
  CHECK(p.run("diagnose", " --seed 9") == 1);
  out = slurp(p.dir.file("last_out.txt"));
  CHECK(out.find("trained under config") != std::string::npos);
}
