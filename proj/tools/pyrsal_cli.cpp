#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pyrsal/blend.hpp"
#include "pyrsal/checkpoint.hpp"
#include "pyrsal/config.hpp"
#include "pyrsal/image_io.hpp"
#include "pyrsal/metrics.hpp"
#include "pyrsal/model.hpp"
#include "pyrsal/synth.hpp"
#include "pyrsal/train.hpp"

namespace fs = std::filesystem;
using namespace pyrsal;

namespace {

std::vector<std::string> png_stems(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      out.push_back(e.path().stem().string());
  std::sort(out.begin(), out.end());
  return out;
}

int run_synth(const std::string& out, int n, int size, std::uint64_t seed,
              bool flat_bg) {
  SynthSpec spec;
  spec.n_images = n;
  spec.size = size;
  spec.seed = seed;
  spec.textured_background = !flat_bg;
  generate(spec, out);
  std::cout << (fs::path(out) / "manifest.json").string() << '\n';
  return 0;
}

struct TrainCli {
  std::string config, data, out;
  std::uint64_t seed = 0;
  std::int64_t iters = 0;
  int batch = 0, train_size = 0;
  double lr = 0.0;
  bool no_stop_grad = false, no_pc_loss = false, no_pred_pyramid = false;
  bool gt_resize_not_reduce = false, no_augment = false;
};

int run_train(const TrainCli& a, const CLI::App& cmd) {
  RunConfig cfg;
  if (!a.config.empty()) cfg = load_run_config(a.config);
  if (cmd.count("--seed")) cfg.seed = a.seed;
  if (cmd.count("--iters")) cfg.iter_max = a.iters;
  if (cmd.count("--batch")) cfg.sched.batch_size = a.batch;
  if (cmd.count("--lr")) cfg.sched.base_lr = a.lr;
  if (cmd.count("--train-size")) {
    cfg.model.train_h = a.train_size;
    cfg.model.train_w = a.train_size;
  }
  if (a.no_stop_grad) cfg.model.stop_grad = false;
  if (a.no_pc_loss) cfg.flags.pc_loss = false;
  if (a.no_pred_pyramid) cfg.model.pred_pyramid = false;
  if (a.gt_resize_not_reduce) cfg.flags.gt_pyramid = false;
  if (a.no_augment) cfg.augment = false;
  cfg.data_dir = a.data;
  cfg.out_dir = a.out;

  Dataset data = load_pairs(cfg.data_dir);
  std::cout << "training on " << data.pairs.size() << " pairs, "
            << cfg.iter_max << " steps\n";
  PyramidSaliencyNet<float> model(cfg.model, cfg.seed);
  TrainResult res = train(model, data, cfg);
  std::cout << "best train MAE " << res.best_mae << " at step "
            << res.best_iter << '\n'
            << "checkpoints: " << res.best_path << ", " << res.last_path
            << '\n';
  return 0;
}

int run_infer(const std::string& ckpt, const std::string& input,
              const std::string& output, bool do_blend, const CLI::App& cmd,
              int L, int skip_below) {
  Checkpoint ck = load_checkpoint(ckpt);
  PyramidSaliencyNet<float> model(ck.config.model, ck.config.seed);
  restore(model, ck);
  ResizePolicy policy = resize_for(ck.config);
  if (cmd.count("--L")) policy.L = L;
  if (cmd.count("--skip-below")) policy.skip_below = skip_below;

  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& s : png_stems(input))
      inputs.push_back(fs::path(input) / (s + ".png"));
  } else {
    inputs.push_back(input);
  }
  if (inputs.empty()) throw std::runtime_error("no input images: " + input);

  fs::create_directories(output);
  {
    std::ofstream prov(fs::path(output) / "provenance.json");
    nlohmann::json j{{"checkpoint", ckpt},
                     {"blend", do_blend},
                     {"L", policy.L},
                     {"skip_below", policy.skip_below},
                     {"config", nlohmann::json::parse(to_json(ck.config))}};
    prov << j.dump(2) << '\n';
  }

  const GaussianKernel2D& kern = model.kernel;
  const TransitionSchedule sched;
  for (const auto& p : inputs) {
    Tensor<float> img = load_rgb(p.string());
    Tensor<float> map;
    std::string route;
    if (do_blend) {
      auto plan = plan_resize(img.h, img.w, policy);
      map = blend(model, img, policy, sched, kern);
      if (plan.skip) {
        route = "plain (shorter side < " + std::to_string(policy.skip_below) +
                ")";
      } else {
        route = "blend (hr " + std::to_string(plan.h) + "x" +
                std::to_string(plan.w) + ", lr " +
                std::to_string(policy.train_h) + "x" +
                std::to_string(policy.train_w) + ", bands 17/9/5)";
      }
    } else {
      map = plain_saliency(model, img, policy);
      route = "plain";
    }
    auto dst = fs::path(output) / (p.stem().string() + ".png");
    save_map(dst.string(), map);
    std::cout << p.stem().string() << ": " << route << '\n';
  }
  return 0;
}

int run_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& report, const std::string& metrics,
             bool fcurve) {
  std::set<std::string> want;
  {
    std::stringstream ss(metrics);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok != "s" && tok != "f" && tok != "mae" && tok != "mba")
        throw std::runtime_error("unknown metric: " + tok);
      want.insert(tok);
    }
    if (want.empty()) throw std::runtime_error("empty --metrics list");
  }

  auto preds = png_stems(pred_dir);
  auto gts = png_stems(gt_dir);
  std::set<std::string> gt_set(gts.begin(), gts.end());
  std::vector<std::string> matched;
  for (const auto& s : preds) {
    if (gt_set.count(s)) {
      matched.push_back(s);
    } else {
      std::cerr << "skipping " << s << ": no ground truth\n";
    }
  }
  for (const auto& s : gts)
    if (!std::binary_search(preds.begin(), preds.end(), s))
      std::cerr << "skipping " << s << ": no prediction\n";
  if (matched.empty()) throw std::runtime_error("no matched stems to score");

  std::vector<MetricRow> rows;
  std::vector<double> fsum(256, 0.0);
  for (const auto& stem : matched) {
    auto s = load_map((fs::path(pred_dir) / (stem + ".png")).string())
                 .cast<double>();
    auto g = load_map((fs::path(gt_dir) / (stem + ".png")).string())
                 .cast<double>();
    MetricRow row;
    row.name = stem;
    if (want.count("s")) row.s_measure = s_measure(s, g);
    if (want.count("f")) row.f_max = f_max(s, g);
    if (want.count("mae")) row.mae = mae(s, g);
    if (want.count("mba")) {
      auto b = mba(s, g);
      row.mba = b.value;
      row.mba_degenerate = b.degenerate;
    }
    if (fcurve) {
      auto c = f_curve(s, g);
      for (int t = 0; t < 256; ++t) fsum[size_t(t)] += c[size_t(t)];
    }
    rows.push_back(row);
  }
  MetricReport rep = build_report(rows);

  auto row_json = [&](const MetricRow& r) {
    nlohmann::json j{{"name", r.name}};
    if (want.count("s")) j["s_measure"] = r.s_measure;
    if (want.count("f")) j["f_max"] = r.f_max;
    if (want.count("mae")) j["mae"] = r.mae;
    if (want.count("mba")) {
      j["mba"] = r.mba;
      j["mba_degenerate"] = r.mba_degenerate;
    }
    return j;
  };
  nlohmann::json j;
  j["invocation"] = {{"pred_dir", pred_dir},
                     {"gt_dir", gt_dir},
                     {"metrics", std::vector<std::string>(want.begin(),
                                                          want.end())},
                     {"fcurve", fcurve}};
  auto prov = fs::path(pred_dir) / "provenance.json";
  j["config"] = nullptr;
  if (fs::is_regular_file(prov)) {
    std::ifstream f(prov);
    std::ostringstream ss;
    ss << f.rdbuf();
    j["config"] = nlohmann::json::parse(ss.str(), nullptr, false);
  }
  j["schedule_note"] =
      "per-image mba averages 5 boundary-band radii, 1..max(1, "
      "0.02*hypot(h, w))";
  j["per_image"] = nlohmann::json::array();
  for (const auto& r : rep.rows) j["per_image"].push_back(row_json(r));
  j["mean"] = row_json(rep.mean);
  j["mean"].erase("name");

  if (!fs::path(report).parent_path().empty())
    fs::create_directories(fs::path(report).parent_path());
  std::ofstream out(report);
  if (!out) throw std::runtime_error("cannot write report: " + report);
  out << j.dump(2) << '\n';
  std::cout << "report: " << report << '\n';

  if (fcurve) {
    auto cpath = fs::path(report).parent_path() / "fcurve.csv";
    std::ofstream cf(cpath);
    if (!cf) throw std::runtime_error("cannot write " + cpath.string());
    cf << "threshold,f\n";
    for (int t = 0; t < 256; ++t)
      cf << (double(t) / 255.0) << ',' << fsum[size_t(t)] / double(rows.size())
         << '\n';
    std::cout << "fcurve: " << cpath.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saliency pyramid toolkit"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate a shapes dataset");
  std::string synth_out;
  int synth_n = 8, synth_size = 128;
  std::uint64_t synth_seed = 0;
  bool flat_bg = false;
  synth->add_option("--out", synth_out, "output dataset root")->required();
  synth->add_option("--n", synth_n, "image count");
  synth->add_option("--size", synth_size, "square size, multiple of 32");
  synth->add_option("--seed", synth_seed, "generation seed");
  synth->add_flag("--flat-bg", flat_bg, "disable background texture");

  auto* tr = app.add_subcommand("train", "fit a model on an image/mask dir");
  TrainCli t;
  tr->add_option("--config", t.config, "run config json");
  tr->add_option("--data", t.data, "dataset root")->required();
  tr->add_option("--out", t.out, "run output dir")->required();
  tr->add_option("--seed", t.seed, "weights/shuffle/augment seed");
  tr->add_option("--iters", t.iters, "total optimizer steps");
  tr->add_option("--batch", t.batch, "batch size");
  tr->add_option("--lr", t.lr, "base learning rate");
  tr->add_option("--train-size", t.train_size, "square train shape");
  tr->add_flag("--no-stop-grad", t.no_stop_grad,
               "let gradients cross coarse-map inputs");
  tr->add_flag("--no-pc-loss", t.no_pc_loss,
               "drop the cross-stage consistency terms");
  tr->add_flag("--no-pred-pyramid", t.no_pred_pyramid,
               "predict each stage independently");
  tr->add_flag("--gt-resize-not-reduce", t.gt_resize_not_reduce,
               "build coarse ground truth by bilinear shrink");
  tr->add_flag("--no-augment", t.no_augment, "train on raw pairs");

  auto* inf = app.add_subcommand("infer", "write saliency maps for images");
  std::string inf_ckpt, inf_input, inf_output;
  bool inf_blend = false;
  int inf_L = 1280, inf_skip = 512;
  inf->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
  inf->add_option("--input", inf_input, "png file or directory")->required();
  inf->add_option("--output", inf_output, "output directory")->required();
  inf->add_flag("--blend", inf_blend, "high-res detail blending");
  inf->add_option("--L", inf_L, "cap on the detail pass shorter side");
  inf->add_option("--skip-below", inf_skip,
                  "plain path when the shorter side is below this");

  auto* ev = app.add_subcommand("eval", "score predictions against masks");
  std::string ev_pred, ev_gt, ev_report, ev_metrics = "s,f,mae,mba";
  bool ev_fcurve = false;
  ev->add_option("--pred-dir", ev_pred, "prediction maps")->required();
  ev->add_option("--gt-dir", ev_gt, "ground truth masks")->required();
  ev->add_option("--report", ev_report, "report json path")->required();
  ev->add_option("--metrics", ev_metrics, "subset of s,f,mae,mba");
  ev->add_flag("--fcurve", ev_fcurve, "write mean F per threshold as csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return run_synth(synth_out, synth_n, synth_size, synth_seed, flat_bg);
    if (tr->parsed()) return run_train(t, *tr);
    if (inf->parsed())
      return run_infer(inf_ckpt, inf_input, inf_output, inf_blend, *inf,
                       inf_L, inf_skip);
    if (ev->parsed())
      return run_eval(ev_pred, ev_gt, ev_report, ev_metrics, ev_fcurve);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
