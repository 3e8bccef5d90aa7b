#include "pyrsal/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "pyrsal/checkpoint.hpp"
#include "pyrsal/image_io.hpp"
#include "pyrsal/losses.hpp"
#include "pyrsal/metrics.hpp"
#include "pyrsal/optim.hpp"
#include "pyrsal/pyramid.hpp"
#include "pyrsal/rng.hpp"

namespace fs = std::filesystem;

namespace pyrsal {
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

Tensor<float> nearest_mask(const Tensor<float>& g, int oh, int ow) {
  Tensor<float> out = Tensor<float>::map2d(oh, ow);
  const double sy = double(g.h) / oh, sx = double(g.w) / ow;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      int iy = std::clamp(int(std::lrint((y + 0.5) * sy - 0.5)), 0, g.h - 1);
      int ix = std::clamp(int(std::lrint((x + 0.5) * sx - 0.5)), 0, g.w - 1);
      out.at(0, 0, y, x) = g.at(0, 0, iy, ix) >= 0.5f ? 1.0f : 0.0f;
    }
  return out;
}

SamplePair to_shape(const SamplePair& p, int h, int w) {
  if (p.image.h == h && p.image.w == w) return p;
  return {bilinear_plain(p.image, h, w), nearest_mask(p.gt, h, w)};
}

std::vector<size_t> shuffled(size_t n, Pcg32 rng) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  for (size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[size_t(rng.uniform_int(0, int(i) - 1))]);
  return idx;
}

double train_set_mae(PyramidSaliencyNet<float>& model,
                     const std::vector<SamplePair>& eval_set) {
  double acc = 0.0;
  for (const auto& p : eval_set) {
    auto out = model.forward(make_var(p.image, false), false);
    acc += mae(out.s0->value.cast<double>(), p.gt.cast<double>());
  }
  return acc / double(eval_set.size());
}

[[noreturn]] void abort_on_nan(const RunConfig& cfg, std::int64_t iter,
                               const std::vector<std::string>& stems,
                               const Tensor<float>& imgs,
                               const Tensor<float>& gts) {
  std::string where = "(no out dir, batch not dumped)";
  if (!cfg.out_dir.empty()) {
    fs::path d = fs::path(cfg.out_dir) / "nan_batch";
    fs::create_directories(d);
    for (int i = 0; i < imgs.n; ++i) {
      Tensor<float> img(1, 3, imgs.h, imgs.w), gt = Tensor<float>::map2d(gts.h, gts.w);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < imgs.h; ++y)
          for (int x = 0; x < imgs.w; ++x)
            img.at(0, c, y, x) = imgs.at(i, c, y, x);
      for (int y = 0; y < gts.h; ++y)
        for (int x = 0; x < gts.w; ++x) gt.at(0, 0, y, x) = gts.at(i, 0, y, x);
      save_rgb((d / ("img_" + std::to_string(i) + ".png")).string(), img);
      save_map((d / ("gt_" + std::to_string(i) + ".png")).string(), gt);
    }
    nlohmann::json info{{"iter", iter}, {"stems", stems}};
    std::ofstream f(d / "info.json");
    f << info.dump(2) << '\n';
    where = d.string();
  }
  throw std::runtime_error("loss is not finite at iter " +
                           std::to_string(iter) + "; batch dump: " + where);
}

}  // namespace

Dataset load_pairs(const std::string& root) {
  fs::path r(root);
  Dataset out;
  out.stems = png_stems(r / "images");
  if (out.stems.empty())
    throw std::runtime_error("no training pairs under " + root);
  for (const auto& s : out.stems) {
    auto mask = r / "masks" / (s + ".png");
    if (!fs::is_regular_file(mask))
      throw std::runtime_error("missing mask for stem " + s + ": " +
                               mask.string());
    SamplePair p;
    p.image = load_rgb((r / "images" / (s + ".png")).string());
    p.gt = load_map(mask.string());
    if (p.image.h != p.gt.h || p.image.w != p.gt.w)
      throw std::runtime_error("image/mask size mismatch for stem " + s);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

TrainResult train(PyramidSaliencyNet<float>& model, const Dataset& data,
                  const RunConfig& cfg) {
  if (data.pairs.empty()) throw std::runtime_error("dataset is empty");
  const int th = cfg.model.train_h, tw = cfg.model.train_w;
  if (th % 32 || tw % 32)
    throw std::runtime_error("train shape must be a multiple of 32");
  const size_t n = data.pairs.size();
  const size_t batch = size_t(std::max(1, cfg.sched.batch_size));
  const std::int64_t iter_max =
      cfg.iter_max > 0 ? cfg.iter_max
                       : std::int64_t(cfg.sched.max_epochs) *
                             std::int64_t((n + batch - 1) / batch);

  ParamStore<float> st;
  model.collect(st);
  std::vector<Var<float>> params;
  std::vector<Var<float>> thetas;
  for (auto& [name, v] : st.params) {
    params.push_back(v);
    if (name.find(".theta") != std::string::npos) thetas.push_back(v);
  }
  Adam<float> opt(params);

  std::vector<SamplePair> eval_set;
  for (const auto& p : data.pairs) eval_set.push_back(to_shape(p, th, tw));

  TrainResult res;
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    save_run_config(cfg, (fs::path(cfg.out_dir) / "config.json").string());
    res.log_path = (fs::path(cfg.out_dir) / "train_log.ndjson").string();
    log.open(res.log_path);
    if (!log) throw std::runtime_error("cannot write " + res.log_path);
  }

  const GaussianKernel2D& kern = model.kernel;
  Pcg32 aug_rng(cfg.seed, 0xA46);
  std::int64_t iter = 0;
  for (std::int64_t epoch = 0; iter < iter_max; ++epoch) {
    auto order = shuffled(n, Pcg32(cfg.seed, std::uint64_t(epoch)));
    for (size_t pos = 0; pos < n && iter < iter_max; pos += batch) {
      const size_t take = std::min(batch, n - pos);
      Tensor<float> imgs(int(take), 3, th, tw);
      Tensor<float> gts(int(take), 1, th, tw);
      std::vector<std::string> stems;
      for (size_t b = 0; b < take; ++b) {
        const size_t src = order[pos + b];
        stems.push_back(data.stems[src]);
        SamplePair p = data.pairs[src];
        if (cfg.augment) p = augment(p, cfg.aug, aug_rng);
        p = to_shape(p, th, tw);
        for (int c = 0; c < 3; ++c)
          for (int y = 0; y < th; ++y)
            for (int x = 0; x < tw; ++x)
              imgs.at(int(b), c, y, x) = p.image.at(0, c, y, x);
        for (int y = 0; y < th; ++y)
          for (int x = 0; x < tw; ++x)
            gts.at(int(b), 0, y, x) = p.gt.at(0, 0, y, x);
      }

      auto pred = model.forward(make_var(imgs, false), true);
      auto gtp = build_gt_pyramid(gts, kern, cfg.flags.gt_pyramid);
      auto loss = total_loss(pred, gtp, kern, cfg.weights, cfg.flags);
      const double total = loss.total->value.data[0];
      if (!std::isfinite(total)) abort_on_nan(cfg, iter, stems, imgs, gts);

      const double lr = lr_at(cfg.sched, iter, iter_max);
      opt.zero_grad();
      ag::backward(loss.total);
      opt.step(lr);
      for (auto& t : thetas)
        for (auto& v : t->value.data)
          v = std::clamp(v, 1e-3f, 1.0f - 1e-3f);

      res.total_curve.push_back(total);
      if (log.is_open()) {
        nlohmann::json line{{"iter", iter}, {"lr", lr}, {"total", total}};
        for (int j = 0; j < 4; ++j)
          line["wbce"].push_back(loss.wbce_stage[size_t(j)]->value.data[0]);
        for (int j = 0; j < 3; ++j)
          line["pc"].push_back(loss.pc_pair[size_t(j)]
                                   ? loss.pc_pair[size_t(j)]->value.data[0]
                                   : 0.0);
        log << line.dump() << '\n';
      }
      ++iter;

      if (iter % std::max(1, cfg.eval_every) == 0 || iter == iter_max) {
        double m = train_set_mae(model, eval_set);
        if (m < res.best_mae || res.best_iter < 0) {
          res.best_mae = m;
          res.best_iter = iter;
          if (!cfg.out_dir.empty()) {
            res.best_path = (fs::path(cfg.out_dir) / "best.ck").string();
            save_checkpoint(snapshot(model, cfg), res.best_path);
          }
        }
      }
    }
  }

  if (!cfg.out_dir.empty()) {
    res.last_path = (fs::path(cfg.out_dir) / "last.ck").string();
    save_checkpoint(snapshot(model, cfg), res.last_path);
  }
  return res;
}

}  // namespace pyrsal
