// Copyright (c) 2026, OBIFormer contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the obiformer executable on tiny fixtures. Each command
// runs inside its own working directory so stray writes are visible.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "obiformer/data.hpp"
#include "obiformer/image.hpp"

#ifndef OBIFORMER_CLI
#error "OBIFORMER_CLI must name the executable under test"
#endif

namespace fs = std::filesystem;
using namespace obiformer;

namespace {

const char* kTinyModel = "model.encoder_depth=1\nmodel.base_channels=4\n";

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

Run run(const fs::path& cwd, const std::string& args) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" OBIFORMER_CLI "' " + args + " >stdout.txt 2>stderr.txt";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(cwd / "stdout.txt");
  r.err = slurp(cwd / "stderr.txt");
  fs::remove(cwd / "stdout.txt");
  fs::remove(cwd / "stderr.txt");
  return r;
}

std::set<std::string> entries(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

// Working directory with a synthesized triplet dataset and a tiny model config.
fs::path fixture(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("obiformer_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "tiny.cfg") << kTinyModel;
  write_triplets((dir / "ds").string(), synthetic_corpus(10, 32, 5));
  return dir;
}

void check_only_added(const fs::path& dir, const std::set<std::string>& before, const std::string& out) {
  std::set<std::string> expected = before;
  expected.insert(out);
  CHECK(entries(dir) == expected);
}

std::size_t count_files(const fs::path& dir, const std::string& suffix) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().string().ends_with(suffix);
  return n;
}

}  // namespace

TEST_CASE("help exits zero and lists every subcommand") {
  const auto dir = fixture("help");
  const Run r = run(dir, "--help");
  CHECK(r.code == 0);
  for (const char* sub : {"synth", "skeletonize", "train", "denoise", "eval", "bench", "sweep", "plot", "gradcheck"}) {
    CHECK(r.out.find(sub) != std::string::npos);
  }
}

TEST_CASE("usage errors exit 1 with usage on stderr") {
  const auto dir = fixture("usage");
  Run r = run(dir, "");
  CHECK(r.code == 1);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = run(dir, "train --bogus 3 --out x");
  CHECK(r.code == 1);
  r = run(dir, "bench --device cuda");
  CHECK(r.code == 1);
  CHECK(r.err.find("cuda") != std::string::npos);
  r = run(dir, "train --out x --config tiny.cfg");
  CHECK(r.code == 1);
  CHECK_FALSE(fs::exists(dir / "x"));
}

TEST_CASE("runtime errors exit 2 and name the failing path") {
  const auto dir = fixture("runtime");
  const Run r = run(dir, "denoise --ckpt missing.obif --in ds/noisy --out o");
  CHECK(r.code == 2);
  CHECK(r.err.find("missing.obif") != std::string::npos);
}

TEST_CASE("synth and skeletonize write only into --out") {
  const auto dir = fixture("synth");
  auto before = entries(dir);
  Run r = run(dir, "synth --out gen --count 4 --size 32 --seed 1 --noise-kind dense_white --intensity 0.6");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "gen");
  for (const char* sub : {"noisy", "clean", "skeleton"}) CHECK(count_files(dir / "gen" / sub, ".png") == 4);
  CHECK(fs::exists(dir / "gen" / "dataset.txt"));

  before = entries(dir);
  r = run(dir, "skeletonize --in ds/clean --out sk");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "sk");
  CHECK(count_files(dir / "sk", ".png") == 10);
  const Image mask = read_png((dir / "sk" / "synth_00000.png").string(), 1);
  for (float v : mask.data) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("train, denoise, eval, bench and plot round trip") {
  const auto dir = fixture("pipeline");
  auto before = entries(dir);
  Run r = run(dir, "train --config tiny.cfg --in ds --out run --size 32 --epochs 2 --batch 4 --alpha2 0 --alpha4 0 -q");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "run");
  for (const char* f : {"last.obif", "best.obif", "loss.csv", "validation.csv"}) CHECK(fs::exists(dir / "run" / f));

  before = entries(dir);
  r = run(dir, "train --config tiny.cfg --in ds --out run --size 32 --epochs 3 --batch 4 --alpha2 0 --alpha4 0 "
               "--ckpt run/last.obif -q");
  CHECK(r.code == 0);
  CHECK(entries(dir) == before);

  r = run(dir, "denoise --ckpt run/best.obif --in ds/noisy --out restored -q");
  REQUIRE(r.code == 0);
  CHECK(count_files(dir / "restored", "_denoised.png") == 10);
  CHECK(count_files(dir / "restored", "_skeleton.png") == 10);
  const Image in = read_png((dir / "ds" / "noisy" / "synth_00003.png").string(), 3);
  const Image out = read_png((dir / "restored" / "synth_00003_denoised.png").string(), 3);
  CHECK(out.height == in.height);
  CHECK(out.width == in.width);

  before = entries(dir);
  r = run(dir, "eval --ckpt run/best.obif --in ds --size 32 --out report/metrics.csv");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "report");
  CHECK(r.out.find("images 10") != std::string::npos);
  CHECK(slurp(dir / "report" / "metrics.csv").find("mean,") != std::string::npos);

  r = run(dir, "eval --bypass --in ds --size 32");
  CHECK(r.code == 0);
  CHECK(r.out.find("mean PSNR") != std::string::npos);

  before = entries(dir);
  r = run(dir, "bench --ckpt run/last.obif --size 32 --warmup 1 --iters 2 --out bench/eff.csv");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "bench");
  CHECK(r.out.find("latency") != std::string::npos);

  before = entries(dir);
  r = run(dir, "plot --in run/loss.csv --out charts");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "charts");
  CHECK(fs::exists(dir / "charts" / "loss.png"));
  CHECK(fs::exists(dir / "charts" / "validation_psnr.png"));
}

TEST_CASE("sweep writes a table and charts") {
  const auto dir = fixture("sweep");
  const auto before = entries(dir);
  const Run r = run(dir, "sweep --config tiny.cfg --in ds --size 32 --epochs 1 --batch 4 --alpha2 0 --alpha4 0 "
                         "--axis a3 --values 0,1 --out sw -q");
  REQUIRE(r.code == 0);
  check_only_added(dir, before, "sw");
  const std::string table = slurp(dir / "sw" / "sweep_a3.csv");
  CHECK(table.rfind("a3,psnr,ssim", 0) == 0);
  CHECK(fs::exists(dir / "sw" / "sweep_a3_psnr.png"));
  CHECK(run(dir, "sweep --in ds --axis a3 --values 0,x --out sw2").code == 1);
}

TEST_CASE("gradcheck reports every group") {
  const auto dir = fixture("gradcheck");
  // Floor scaled with a1 = 100 so cancellation on tiny gradients is absorbed.
  const Run r = run(dir, "gradcheck --alpha2 0 --alpha4 0 --step 1e-6 --floor 1e-3");
  CHECK(r.code == 0);
  CHECK(r.out.find("121 groups, 0 groups above") != std::string::npos);
}
