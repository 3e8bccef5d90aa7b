#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "pyrsal/image_io.hpp"

using namespace pyrsal;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int exit = -1;
  std::string out, err;
};

fs::path work_root() {
  static fs::path d = [] {
    auto p = fs::temp_directory_path() / "pyrsal_cli_t";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(bool(f));
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

CliRun cli(const std::string& args) {
  auto so = work_root() / "stdout.txt";
  auto se = work_root() / "stderr.txt";
  std::string cmd = std::string(PYRSAL_BIN) + " " + args + " > " +
                    so.string() + " 2> " + se.string();
  int rc = std::system(cmd.c_str());
  CliRun r;
  r.exit = rc < 0 ? rc : WEXITSTATUS(rc);
  r.out = slurp(so);
  r.err = slurp(se);
  return r;
}

// tiny run shared by the pipeline cases; built once
struct Pipeline {
  fs::path root = work_root() / "pipe";
  fs::path data = root / "data";
  fs::path run = root / "run";

  Pipeline() {
    fs::create_directories(root);
    std::ofstream cfg(root / "cfg.json");
    cfg << R"({
      "model": {"widths": [8, 8, 16, 16], "decoder_width": 8,
                "train_h": 64, "train_w": 64},
      "train": {"batch_size": 2, "base_lr": 0.003, "warmup_iters": 4,
                "iter_max": 6, "eval_every": 3}
    })";
    cfg.close();
    auto r = cli("synth --out " + data.string() + " --n 4 --size 64 --seed 3");
    REQUIRE(r.exit == 0);
    r = cli("train --config " + (root / "cfg.json").string() + " --data " +
            data.string() + " --out " + run.string() + " --seed 1");
    REQUIRE(r.exit == 0);
  }
};

const Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("synth subcommand generates and validates") {
  auto out = work_root() / "synth_a";
  auto r = cli("synth --out " + out.string() + " --n 2 --size 64 --seed 7");
  CHECK(r.exit == 0);
  CHECK(r.out.find("manifest.json") != std::string::npos);
  CHECK(fs::is_regular_file(out / "manifest.json"));
  CHECK(fs::is_regular_file(out / "images" / "0001.png"));

  auto out2 = work_root() / "synth_b";
  r = cli("synth --out " + out2.string() + " --n 2 --size 64 --seed 7");
  CHECK(r.exit == 0);
  for (const char* rel : {"images/0000.png", "images/0001.png",
                          "masks/0000.png", "masks/0001.png"})
    CHECK(slurp(out / rel) == slurp(out2 / rel));

  r = cli("synth --out " + (work_root() / "synth_c").string() + " --size 100");
  CHECK(r.exit != 0);
  CHECK(r.err.find("multiple of 32") != std::string::npos);

  CHECK(cli("").exit != 0);
  CHECK(cli("frobnicate").exit != 0);
}

TEST_CASE("train writes checkpoints and a parsable loss log") {
  const auto& p = pipeline();
  CHECK(fs::is_regular_file(p.run / "best.ck"));
  CHECK(fs::is_regular_file(p.run / "last.ck"));
  CHECK(fs::is_regular_file(p.run / "config.json"));

  std::ifstream log(p.run / "train_log.ndjson");
  REQUIRE(bool(log));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j["iter"] == lines);
    CHECK(j["wbce"].size() == 4);
    CHECK(j["pc"].size() == 3);
    CHECK(j["total"].get<double>() > 0.0);
    if (lines == 0) CHECK(j["lr"].get<double>() == 0.0);
    ++lines;
  }
  CHECK(lines == 6);

  // same seed, same data: identical loss trajectory
  auto rerun = work_root() / "pipe" / "rerun";
  auto r = cli("train --config " +
               (work_root() / "pipe" / "cfg.json").string() + " --data " +
               p.data.string() + " --out " + rerun.string() + " --seed 1");
  REQUIRE(r.exit == 0);
  CHECK(slurp(rerun / "train_log.ndjson") ==
        slurp(p.run / "train_log.ndjson"));

  r = cli("train --data " + (work_root() / "absent").string() + " --out " +
          (work_root() / "x").string());
  CHECK(r.exit != 0);
}

TEST_CASE("ablation flags reach the loss and the log") {
  const auto& p = pipeline();
  auto out = work_root() / "pipe" / "nopc";
  auto r = cli("train --config " + (work_root() / "pipe" / "cfg.json").string() +
               " --data " + p.data.string() + " --out " + out.string() +
               " --seed 1 --iters 2 --no-pc-loss");
  REQUIRE(r.exit == 0);
  std::ifstream log(out / "train_log.ndjson");
  std::string line;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    for (const auto& v : j["pc"]) CHECK(v.get<double>() == 0.0);
  }
  auto cfg = nlohmann::json::parse(slurp(out / "config.json"));
  CHECK(cfg["loss"]["pc_loss"] == false);
  CHECK(cfg["train"]["iter_max"] == 2);

  out = work_root() / "pipe" / "ablate_all";
  r = cli("train --config " + (work_root() / "pipe" / "cfg.json").string() +
          " --data " + p.data.string() + " --out " + out.string() +
          " --seed 1 --iters 1 --no-stop-grad --no-pred-pyramid"
          " --gt-resize-not-reduce --no-augment");
  REQUIRE(r.exit == 0);
  cfg = nlohmann::json::parse(slurp(out / "config.json"));
  CHECK(cfg["model"]["stop_grad"] == false);
  CHECK(cfg["model"]["pred_pyramid"] == false);
  CHECK(cfg["loss"]["gt_pyramid"] == false);
  CHECK(cfg["train"]["augment"] == false);
}

TEST_CASE("infer routes and output shapes") {
  const auto& p = pipeline();
  auto pred = work_root() / "pipe" / "pred";
  auto r = cli("infer --ckpt " + (p.run / "best.ck").string() + " --input " +
               (p.data / "images").string() + " --output " + pred.string());
  REQUIRE(r.exit == 0);
  for (int i = 0; i < 4; ++i) {
    auto f = pred / ("000" + std::to_string(i) + ".png");
    REQUIRE(fs::is_regular_file(f));
    auto m = load_map(f.string());
    CHECK(m.h == 64);
    CHECK(m.w == 64);
  }
  CHECK(fs::is_regular_file(pred / "provenance.json"));
  auto prov = nlohmann::json::parse(slurp(pred / "provenance.json"));
  CHECK(prov["config"]["model"]["train_h"] == 64);

  // small input with --blend takes the plain path and says so
  auto pred2 = work_root() / "pipe" / "pred_blend";
  r = cli("infer --ckpt " + (p.run / "best.ck").string() + " --input " +
          (p.data / "images" / "0000.png").string() + " --output " +
          pred2.string() + " --blend");
  REQUIRE(r.exit == 0);
  CHECK(r.out.find("plain (shorter side < 512)") != std::string::npos);

  // large input with --blend takes the detail route and logs the plan
  auto big = work_root() / "big";
  r = cli("synth --out " + big.string() + " --n 1 --size 544 --seed 9");
  REQUIRE(r.exit == 0);
  auto pred3 = work_root() / "pipe" / "pred_big";
  r = cli("infer --ckpt " + (p.run / "best.ck").string() + " --input " +
          (big / "images").string() + " --output " + pred3.string() +
          " --blend --L 96");
  REQUIRE(r.exit == 0);
  CHECK(r.out.find("blend (hr 96x96, lr 64x64") != std::string::npos);
  auto m = load_map((pred3 / "0000.png").string());
  CHECK(m.h == 544);
  CHECK(m.w == 544);

  std::ofstream bad(work_root() / "bad.ck");
  bad << "junk";
  bad.close();
  r = cli("infer --ckpt " + (work_root() / "bad.ck").string() + " --input " +
          (p.data / "images").string() + " --output " +
          (work_root() / "nope").string());
  CHECK(r.exit != 0);
  CHECK(r.err.find("magic") != std::string::npos);
}

TEST_CASE("eval pairs stems and writes the report") {
  const auto& p = pipeline();

  // predictions equal to ground truth score perfectly
  auto rep = work_root() / "pipe" / "ideal.json";
  auto r = cli("eval --pred-dir " + (p.data / "masks").string() +
               " --gt-dir " + (p.data / "masks").string() + " --report " +
               rep.string() + " --fcurve");
  REQUIRE(r.exit == 0);
  auto j = nlohmann::json::parse(slurp(rep));
  CHECK(j["per_image"].size() == 4);
  CHECK(j["mean"]["f_max"].get<double>() == doctest::Approx(1.0));
  CHECK(j["mean"]["mae"].get<double>() == doctest::Approx(0.0));
  CHECK(j["mean"]["s_measure"].get<double>() ==
        doctest::Approx(1.0).epsilon(1e-6));
  CHECK(j["mean"]["mba"].get<double>() == doctest::Approx(1.0));
  std::ifstream cf(work_root() / "pipe" / "fcurve.csv");
  REQUIRE(bool(cf));
  int rows = 0;
  std::string line;
  while (std::getline(cf, line)) ++rows;
  CHECK(rows == 257);

  // model predictions exist for every stem and get finite scores
  auto rep2 = work_root() / "pipe" / "model.json";
  r = cli("eval --pred-dir " + (work_root() / "pipe" / "pred").string() +
          " --gt-dir " + (p.data / "masks").string() + " --report " +
          rep2.string());
  REQUIRE(r.exit == 0);
  j = nlohmann::json::parse(slurp(rep2));
  CHECK(j["per_image"].size() == 4);
  CHECK(j["config"]["config"]["model"]["decoder_width"] == 8);

  // metric subset drops the other columns
  auto rep3 = work_root() / "pipe" / "subset.json";
  r = cli("eval --pred-dir " + (p.data / "masks").string() + " --gt-dir " +
          (p.data / "masks").string() + " --report " + rep3.string() +
          " --metrics mae,f");
  REQUIRE(r.exit == 0);
  j = nlohmann::json::parse(slurp(rep3));
  CHECK(j["per_image"][0].contains("mae"));
  CHECK(j["per_image"][0].contains("f_max"));
  CHECK(!j["per_image"][0].contains("s_measure"));
  CHECK(!j["per_image"][0].contains("mba"));

  r = cli("eval --pred-dir " + (p.data / "masks").string() + " --gt-dir " +
          (p.data / "masks").string() + " --report " + rep3.string() +
          " --metrics zap");
  CHECK(r.exit != 0);

  // unmatched stems are listed and skipped; all-skipped is an error
  auto part = work_root() / "part";
  fs::create_directories(part);
  fs::copy_file(p.data / "masks" / "0000.png", part / "0000.png",
                fs::copy_options::overwrite_existing);
  fs::copy_file(p.data / "masks" / "0001.png", part / "extra.png",
                fs::copy_options::overwrite_existing);
  auto rep4 = work_root() / "pipe" / "part.json";
  r = cli("eval --pred-dir " + part.string() + " --gt-dir " +
          (p.data / "masks").string() + " --report " + rep4.string());
  REQUIRE(r.exit == 0);
  CHECK(r.err.find("extra") != std::string::npos);
  j = nlohmann::json::parse(slurp(rep4));
  CHECK(j["per_image"].size() == 1);

  auto lonely = work_root() / "lonely";
  fs::create_directories(lonely);
  fs::copy_file(p.data / "masks" / "0000.png", lonely / "zzz.png",
                fs::copy_options::overwrite_existing);
  r = cli("eval --pred-dir " + lonely.string() + " --gt-dir " +
          (p.data / "masks").string() + " --report " + rep4.string());
  CHECK(r.exit != 0);
}
