#include "pyrsal/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace pyrsal {
namespace {

using nlohmann::json;

[[noreturn]] void bad_key(const std::string& scope, const std::string& key) {
  throw std::runtime_error("unknown config key: " + scope + "." + key);
}

void parse_model(const json& j, ModelConfig& m) {
  for (const auto& [k, v] : j.items()) {
    if (k == "widths") {
      m.widths = v.get<std::vector<int>>();
      if (m.widths.size() != 4)
        throw std::runtime_error("model.widths needs exactly 4 entries");
    } else if (k == "decoder_width") {
      m.decoder_width = v.get<int>();
    } else if (k == "train_h") {
      m.train_h = v.get<int>();
    } else if (k == "train_w") {
      m.train_w = v.get<int>();
    } else if (k == "pred_pyramid") {
      m.pred_pyramid = v.get<bool>();
    } else if (k == "stop_grad") {
      m.stop_grad = v.get<bool>();
    } else if (k == "scale_scores") {
      m.scale_scores = v.get<bool>();
    } else {
      bad_key("model", k);
    }
  }
}

void parse_train(const json& j, RunConfig& c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "batch_size") {
      c.sched.batch_size = v.get<int>();
    } else if (k == "max_epochs") {
      c.sched.max_epochs = v.get<int>();
    } else if (k == "base_lr") {
      c.sched.base_lr = v.get<double>();
    } else if (k == "warmup_iters") {
      c.sched.warmup_iters = v.get<int>();
    } else if (k == "poly_power") {
      c.sched.poly_power = v.get<double>();
    } else if (k == "iter_max") {
      c.iter_max = v.get<int64_t>();
    } else if (k == "eval_every") {
      c.eval_every = v.get<int>();
    } else if (k == "augment") {
      c.augment = v.get<bool>();
    } else {
      bad_key("train", k);
    }
  }
}

void parse_resize(const json& j, ResizePolicy& r) {
  for (const auto& [k, v] : j.items()) {
    if (k == "L") {
      r.L = v.get<int>();
    } else if (k == "skip_below") {
      r.skip_below = v.get<int>();
    } else {
      bad_key("resize", k);
    }
  }
}

void parse_augment(const json& j, AugmentConfig& a) {
  for (const auto& [k, v] : j.items()) {
    if (k == "scale_lo") {
      a.scale_lo = v.get<double>();
    } else if (k == "scale_hi") {
      a.scale_hi = v.get<double>();
    } else if (k == "rot_deg") {
      a.rot_deg = v.get<double>();
    } else if (k == "jitter_lo") {
      a.jitter_lo = v.get<double>();
    } else if (k == "jitter_hi") {
      a.jitter_hi = v.get<double>();
    } else {
      bad_key("augment", k);
    }
  }
}

void parse_loss(const json& j, RunConfig& c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "eta") {
      c.weights.eta = v.get<double>();
    } else if (k == "lambda") {
      auto lam = v.get<std::vector<double>>();
      if (lam.size() != 4)
        throw std::runtime_error("loss.lambda needs exactly 4 entries");
      for (int i = 0; i < 4; ++i) c.weights.lambda[size_t(i)] = lam[size_t(i)];
    } else if (k == "pc_loss") {
      c.flags.pc_loss = v.get<bool>();
    } else if (k == "gt_pyramid") {
      c.flags.gt_pyramid = v.get<bool>();
    } else if (k == "pc_normalize") {
      c.flags.pc_normalize = v.get<bool>();
    } else {
      bad_key("loss", k);
    }
  }
}

void parse_paths(const json& j, RunConfig& c) {
  for (const auto& [k, v] : j.items()) {
    if (k == "data") {
      c.data_dir = v.get<std::string>();
    } else if (k == "out") {
      c.out_dir = v.get<std::string>();
    } else {
      bad_key("paths", k);
    }
  }
}

}  // namespace

std::string to_json(const RunConfig& cfg) {
  json j;
  j["model"] = {{"widths", cfg.model.widths},
                {"decoder_width", cfg.model.decoder_width},
                {"train_h", cfg.model.train_h},
                {"train_w", cfg.model.train_w},
                {"pred_pyramid", cfg.model.pred_pyramid},
                {"stop_grad", cfg.model.stop_grad},
                {"scale_scores", cfg.model.scale_scores}};
  j["train"] = {{"batch_size", cfg.sched.batch_size},
                {"max_epochs", cfg.sched.max_epochs},
                {"base_lr", cfg.sched.base_lr},
                {"warmup_iters", cfg.sched.warmup_iters},
                {"poly_power", cfg.sched.poly_power},
                {"iter_max", cfg.iter_max},
                {"eval_every", cfg.eval_every},
                {"augment", cfg.augment}};
  j["resize"] = {{"L", cfg.resize.L}, {"skip_below", cfg.resize.skip_below}};
  j["augment"] = {{"scale_lo", cfg.aug.scale_lo},
                  {"scale_hi", cfg.aug.scale_hi},
                  {"rot_deg", cfg.aug.rot_deg},
                  {"jitter_lo", cfg.aug.jitter_lo},
                  {"jitter_hi", cfg.aug.jitter_hi}};
  j["loss"] = {{"eta", cfg.weights.eta},
               {"lambda", cfg.weights.lambda},
               {"pc_loss", cfg.flags.pc_loss},
               {"gt_pyramid", cfg.flags.gt_pyramid},
               {"pc_normalize", cfg.flags.pc_normalize}};
  j["paths"] = {{"data", cfg.data_dir}, {"out", cfg.out_dir}};
  j["seed"] = cfg.seed;
  return j.dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_object()) throw std::runtime_error("config root must be an object");
  RunConfig c;
  for (const auto& [k, v] : j.items()) {
    if (k == "model") {
      parse_model(v, c.model);
    } else if (k == "train") {
      parse_train(v, c);
    } else if (k == "resize") {
      parse_resize(v, c.resize);
    } else if (k == "augment") {
      parse_augment(v, c.aug);
    } else if (k == "loss") {
      parse_loss(v, c);
    } else if (k == "paths") {
      parse_paths(v, c);
    } else if (k == "seed") {
      c.seed = v.get<uint64_t>();
    } else {
      bad_key("config", k);
    }
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config: " + path);
  f << to_json(cfg) << '\n';
  if (!f) throw std::runtime_error("short write: " + path);
}

}  // namespace pyrsal
