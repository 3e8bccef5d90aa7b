#include "pyrsal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "pyrsal/image_io.hpp"
#include "pyrsal/losses.hpp"

namespace pyrsal {

namespace {

constexpr int kSS = 4;  // supersampling factor per axis
constexpr double kPi = 3.14159265358979323846;

using Poly = std::vector<std::pair<double, double>>;  // (x, y) pixel coords

Poly make_disk(double cx, double cy, double r) {
  Poly p;
  for (int i = 0; i < 128; ++i) {
    double a = 2.0 * kPi * i / 128;
    p.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
  }
  return p;
}

Poly make_rounded_rect(double cx, double cy, double ax, double ay, double rc,
                       double phi) {
  // four corner arcs joined in order; straight edges fall out of the chaining
  Poly p;
  const double qx[4] = {ax - rc, -(ax - rc), -(ax - rc), ax - rc};
  const double qy[4] = {ay - rc, ay - rc, -(ay - rc), -(ay - rc)};
  const double start[4] = {0.0, 0.5 * kPi, kPi, 1.5 * kPi};
  for (int corner = 0; corner < 4; ++corner)
    for (int i = 0; i <= 24; ++i) {
      double a = start[corner] + 0.5 * kPi * i / 24;
      double x = qx[corner] + rc * std::cos(a);
      double y = qy[corner] + rc * std::sin(a);
      p.emplace_back(cx + x * std::cos(phi) - y * std::sin(phi),
                     cy + x * std::sin(phi) + y * std::cos(phi));
    }
  return p;
}

Poly make_star(double cx, double cy, int points, double outer, double ratio,
               double phase) {
  Poly p;
  for (int i = 0; i < 2 * points; ++i) {
    double r = i % 2 == 0 ? outer : outer * ratio;
    double a = phase + kPi * i / points;
    p.emplace_back(cx + r * std::cos(a), cy + r * std::sin(a));
  }
  return p;
}

Poly make_blob(double cx, double cy, const std::vector<double>& radii,
               const std::vector<double>& angles) {
  // closed cubic spline through the polar anchor points
  const int m = int(radii.size());
  std::vector<std::pair<double, double>> pts(m);
  for (int i = 0; i < m; ++i)
    pts[i] = {cx + radii[i] * std::cos(angles[i]),
              cy + radii[i] * std::sin(angles[i])};
  Poly out;
  for (int i = 0; i < m; ++i) {
    auto p0 = pts[(i + m - 1) % m], p1 = pts[i], p2 = pts[(i + 1) % m],
         p3 = pts[(i + 2) % m];
    for (int s = 0; s < 32; ++s) {
      double t = s / 32.0, t2 = t * t, t3 = t2 * t;
      auto interp = [&](double a, double b, double c, double d) {
        return 0.5 * (2 * b + (-a + c) * t + (2 * a - 5 * b + 4 * c - d) * t2 +
                      (-a + 3 * b - 3 * c + d) * t3);
      };
      out.emplace_back(interp(p0.first, p1.first, p2.first, p3.first),
                       interp(p0.second, p1.second, p2.second, p3.second));
    }
  }
  return out;
}

// even-odd scanline fill onto the subsample ownership grid
void rasterize(std::vector<uint8_t>& owner, int size, const Poly& poly,
               uint8_t id) {
  const int grid = size * kSS;
  std::vector<double> xs;
  for (int sy = 0; sy < grid; ++sy) {
    double y = (sy + 0.5) / kSS;
    xs.clear();
    for (std::size_t e = 0; e < poly.size(); ++e) {
      auto [x1, y1] = poly[e];
      auto [x2, y2] = poly[(e + 1) % poly.size()];
      if ((y1 <= y) == (y2 <= y)) continue;
      xs.push_back(x1 + (y - y1) / (y2 - y1) * (x2 - x1));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      int sx0 = std::max(0, int(std::ceil(xs[i] * kSS - 0.5)));
      int sx1 = std::min(grid, int(std::ceil(xs[i + 1] * kSS - 0.5)));
      for (int sx = sx0; sx < sx1; ++sx) owner[std::size_t(sy) * grid + sx] = id;
    }
  }
}

double luminance(const double rgb[3]) {
  return 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2];
}

}  // namespace

SamplePair synth_sample(const SynthSpec& spec, uint64_t index) {
  if (spec.size < 32 || spec.size % 32 != 0)
    throw std::invalid_argument("synth: size must be a positive multiple of 32");
  if (spec.kinds.empty() || spec.min_shapes < 1 ||
      spec.max_shapes < spec.min_shapes || spec.max_shapes > 3)
    throw std::invalid_argument("synth: bad shape configuration");

  Pcg32 rng(spec.seed, index);
  const int size = spec.size;
  const int grid = size * kSS;
  std::vector<uint8_t> owner;

  double bg_rgb[3], shape_rgb[3][3];
  double tex_amp = 0, tex_fx = 0, tex_fy = 0, tex_p1 = 0, tex_p2 = 0, noise = 0;
  int n_shapes = 0;

  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100)
      throw std::runtime_error("synth: could not hit the coverage window");
    n_shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
    for (double& v : bg_rgb) v = rng.uniform(0.1, 0.9);
    if (spec.textured_background) {
      tex_amp = rng.uniform(0.02, 0.08);
      tex_fx = rng.uniform(1.0, 3.0);
      tex_fy = rng.uniform(1.0, 3.0);
      tex_p1 = rng.uniform(0.0, 2.0 * kPi);
      tex_p2 = rng.uniform(0.0, 2.0 * kPi);
      noise = rng.uniform(0.005, 0.02);
    }
    double bg_lum = luminance(bg_rgb);

    owner.assign(std::size_t(grid) * grid, 0);
    for (int s = 0; s < n_shapes; ++s) {
      for (int tries = 0;; ++tries) {
        for (double& v : shape_rgb[s]) v = rng.uniform(0.05, 0.95);
        if (std::abs(luminance(shape_rgb[s]) - bg_lum) >= 0.25 || tries > 50)
          break;
      }
      double cx = rng.uniform(0.3, 0.7) * size;
      double cy = rng.uniform(0.3, 0.7) * size;
      ShapeKind kind = spec.kinds[rng.uniform_int(0, int(spec.kinds.size()) - 1)];
      Poly poly;
      switch (kind) {
        case ShapeKind::disk:
          poly = make_disk(cx, cy, rng.uniform(0.13, 0.3) * size);
          break;
        case ShapeKind::rounded_rect: {
          double ax = rng.uniform(0.14, 0.28) * size;
          double ay = rng.uniform(0.14, 0.28) * size;
          double rc = rng.uniform(0.2, 0.6) * std::min(ax, ay);
          poly = make_rounded_rect(cx, cy, ax, ay, rc, rng.uniform(0.0, kPi));
          break;
        }
        case ShapeKind::star: {
          int pts = rng.uniform_int(5, 7);
          double outer = rng.uniform(0.16, 0.3) * size;
          poly = make_star(cx, cy, pts, outer, rng.uniform(0.4, 0.6),
                           rng.uniform(0.0, 2.0 * kPi));
          break;
        }
        case ShapeKind::blob: {
          int m = rng.uniform_int(5, 7);
          double base = rng.uniform(0.14, 0.26) * size;
          std::vector<double> radii(m), angles(m);
          for (int i = 0; i < m; ++i) {
            radii[i] = base * rng.uniform(0.6, 1.3);
            angles[i] = 2.0 * kPi * i / m + rng.uniform(-0.25, 0.25);
          }
          poly = make_blob(cx, cy, radii, angles);
          break;
        }
      }
      rasterize(owner, size, poly, uint8_t(s + 1));
    }

    // foreground window is judged on the binarized mask the caller will see
    int64_t fg = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        int covered = 0;
        for (int sy = 0; sy < kSS; ++sy)
          for (int sx = 0; sx < kSS; ++sx)
            covered += owner[std::size_t(y * kSS + sy) * grid + x * kSS + sx] != 0;
        fg += covered >= kSS * kSS / 2;
      }
    double frac = double(fg) / (double(size) * size);
    if (frac >= 0.05 && frac <= 0.6) break;
  }

  SamplePair out;
  out.image = Tensor<float>(1, 3, size, size);
  out.gt = Tensor<float>::map2d(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      int count[4] = {0, 0, 0, 0};
      for (int sy = 0; sy < kSS; ++sy)
        for (int sx = 0; sx < kSS; ++sx)
          ++count[owner[std::size_t(y * kSS + sy) * grid + x * kSS + sx]];
      double px[3] = {bg_rgb[0], bg_rgb[1], bg_rgb[2]};
      if (spec.textured_background) {
        double tex = tex_amp *
                     std::sin(2.0 * kPi * tex_fx * x / size + tex_p1) *
                     std::sin(2.0 * kPi * tex_fy * y / size + tex_p2);
        double nz = rng.uniform(-noise, noise);
        for (double& v : px) v += tex + nz;
      }
      double wsum = count[0] / double(kSS * kSS);
      for (int c = 0; c < 3; ++c) px[c] *= wsum;
      int covered = 0;
      for (int s = 1; s <= n_shapes; ++s) {
        covered += count[s];
        for (int c = 0; c < 3; ++c)
          px[c] += shape_rgb[s - 1][c] * count[s] / double(kSS * kSS);
      }
      for (int c = 0; c < 3; ++c)
        out.image.at(0, c, y, x) =
            float(std::min(std::max(px[c], 0.0), 1.0));
      out.gt.at(0, 0, y, x) = covered >= kSS * kSS / 2 ? 1.0f : 0.0f;
    }
  return out;
}

void generate(const SynthSpec& spec, const std::string& out_root) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_root) / "images");
  fs::create_directories(fs::path(out_root) / "masks");

  nlohmann::json manifest;
  manifest["n_images"] = spec.n_images;
  manifest["size"] = spec.size;
  manifest["seed"] = spec.seed;
  manifest["min_shapes"] = spec.min_shapes;
  manifest["max_shapes"] = spec.max_shapes;
  manifest["textured_background"] = spec.textured_background;
  manifest["pairs"] = nlohmann::json::array();

  for (int i = 0; i < spec.n_images; ++i) {
    auto pair = synth_sample(spec, uint64_t(i));
    char stem[16];
    std::snprintf(stem, sizeof stem, "%04d", i);
    save_rgb((fs::path(out_root) / "images" / (std::string(stem) + ".png")).string(),
             pair.image);
    save_map((fs::path(out_root) / "masks" / (std::string(stem) + ".png")).string(),
             pair.gt);
    manifest["pairs"].push_back({{"stem", stem}});
  }

  std::ofstream mf(fs::path(out_root) / "manifest.json");
  if (!mf) throw std::runtime_error("synth: cannot write manifest in " + out_root);
  mf << manifest.dump(2) << "\n";
}

SamplePair augment(const SamplePair& in, const AugmentConfig& cfg, Pcg32& rng) {
  const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  const double rot = rng.uniform(-cfg.rot_deg, cfg.rot_deg) * kPi / 180.0;
  const double contrast = rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
  const double sharp = rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
  const double bright = rng.uniform(cfg.jitter_lo, cfg.jitter_hi);
  if (scale == 1.0 && rot == 0.0 && contrast == 1.0 && bright == 1.0 &&
      sharp == 1.0)
    return in;

  const int h = in.image.h, w = in.image.w;
  // upscale leaves slack for a random crop window; downscale stays centered
  double oy = 0.0, ox = 0.0;
  if (scale > 1.0) {
    double sy = 0.5 * h * (1.0 - 1.0 / scale);
    double sx = 0.5 * w * (1.0 - 1.0 / scale);
    oy = rng.uniform(-sy, sy);
    ox = rng.uniform(-sx, sx);
  }
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double ca = std::cos(rot), sa = std::sin(rot);
  SamplePair out;
  out.image = Tensor<float>(1, 3, h, w);
  out.gt = Tensor<float>::map2d(h, w);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // inverse map: un-rotate then un-scale about the image center
      double dx = x - cx, dy = y - cy;
      double rx = (ca * dx + sa * dy) / scale + cx + ox;
      double ry = (-sa * dx + ca * dy) / scale + cy + oy;

      double fx = std::min(std::max(rx, 0.0), double(w - 1));
      double fy = std::min(std::max(ry, 0.0), double(h - 1));
      int x0 = int(fx), y0 = int(fy);
      int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      double ax = fx - x0, ay = fy - y0;
      for (int c = 0; c < 3; ++c) {
        double v =
            (1 - ay) * ((1 - ax) * in.image.at(0, c, y0, x0) +
                        ax * in.image.at(0, c, y0, x1)) +
            ay * ((1 - ax) * in.image.at(0, c, y1, x0) +
                  ax * in.image.at(0, c, y1, x1));
        out.image.at(0, c, y, x) = float(v);
      }
      int nx = int(std::lrint(rx)), ny = int(std::lrint(ry));
      float g = (nx >= 0 && nx < w && ny >= 0 && ny < h)
                    ? in.gt.at(0, 0, ny, nx)
                    : 0.0f;
      out.gt.at(0, 0, y, x) = g >= 0.5f ? 1.0f : 0.0f;
    }

  double mean[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) mean[c] += out.image.at(0, c, y, x);
    mean[c] /= double(h) * w;
  }
  auto blur = boxmean(out.image, 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = mean[c] + contrast * (out.image.at(0, c, y, x) - mean[c]);
        v *= bright;
        v += (sharp - 1.0) * (out.image.at(0, c, y, x) - blur.at(0, c, y, x));
        out.image.at(0, c, y, x) = float(std::min(std::max(v, 0.0), 1.0));
      }
  return out;
}

}  // namespace pyrsal
