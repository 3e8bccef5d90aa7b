#include "pyrsal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pyrsal {

namespace {

void require_map(const Tensor<double>& t, const char* who) {
  if (t.n != 1 || t.c != 1 || t.h < 1 || t.w < 1)
    throw std::invalid_argument(std::string(who) + ": expected a (1,1,H,W) map");
}

std::vector<uint8_t> binarize(const Tensor<double>& t) {
  std::vector<uint8_t> b(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) b[i] = t.data[i] >= 0.5 ? 1 : 0;
  return b;
}

double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / v.size();
}

}  // namespace

double mae(const Tensor<double>& s, const Tensor<double>& g) {
  check_same_shape(s, g, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::abs(s.data[i] - g.data[i]);
  return s.empty() ? 0.0 : acc / s.size();
}

std::vector<double> f_curve(const Tensor<double>& s, const Tensor<double>& g) {
  check_same_shape(s, g, "f_curve");
  require_map(s, "f_curve");
  auto gb = binarize(g);
  int64_t npos = 0;
  for (auto v : gb) npos += v;
  std::vector<double> curve(256, 0.0);
  if (npos == 0) return curve;

  // bucket pixels by how many thresholds t/255 they strictly exceed
  double thr[256];
  for (int t = 0; t < 256; ++t) thr[t] = t / 255.0;
  int64_t cnt_all[257] = {0}, cnt_pos[257] = {0};
  for (std::size_t i = 0; i < s.size(); ++i) {
    int e = int(std::upper_bound(thr, thr + 256, s.data[i],
                                 [](double v, double th) { return v <= th; }) -
                thr);
    ++cnt_all[e];
    cnt_pos[e] += gb[i];
  }
  int64_t npred = 0, tp = 0;
  for (int e = 256; e >= 1; --e) {
    npred += cnt_all[e];
    tp += cnt_pos[e];
    int t = e - 1;
    double p = npred ? double(tp) / npred : 0.0;
    double r = double(tp) / npos;
    double denom = 0.3 * p + r;
    curve[t] = denom > 0.0 ? 1.3 * p * r / denom : 0.0;
  }
  return curve;
}

double f_max(const Tensor<double>& s, const Tensor<double>& g) {
  auto c = f_curve(s, g);
  return *std::max_element(c.begin(), c.end());
}

namespace {

// similarity of one region's values against the constant 1
double object_score(const std::vector<double>& vals) {
  if (vals.empty()) return 0.0;
  double x = mean_of(vals);
  double sd = 0.0;
  if (vals.size() > 1) {
    double acc = 0.0;
    for (double v : vals) acc += (v - x) * (v - x);
    sd = std::sqrt(acc / (vals.size() - 1));
  }
  return 2.0 * x / (x * x + 1.0 + sd + 1e-8);
}

double ssim_block(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double xm = mean_of(x), ym = mean_of(y);
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      sx += (x[i] - xm) * (x[i] - xm);
      sy += (y[i] - ym) * (y[i] - ym);
      sxy += (x[i] - xm) * (y[i] - ym);
    }
    sx /= n - 1;
    sy /= n - 1;
    sxy /= n - 1;
  }
  double alpha = 4.0 * xm * ym * sxy;
  double beta = (xm * xm + ym * ym) * (sx + sy);
  if (alpha != 0.0) return alpha / (beta + 1e-20);
  return beta == 0.0 ? 1.0 : 0.0;
}

}  // namespace

double s_measure(const Tensor<double>& s, const Tensor<double>& g) {
  check_same_shape(s, g, "s_measure");
  require_map(s, "s_measure");
  auto gb = binarize(g);
  const int h = g.h, w = g.w;
  int64_t fg = 0;
  for (auto v : gb) fg += v;
  double smean = mean_of(s.data);
  if (fg == 0) return 1.0 - smean;
  if (fg == int64_t(g.size())) return smean;

  std::vector<double> vf, vb;
  vf.reserve(fg);
  vb.reserve(g.size() - fg);
  for (std::size_t i = 0; i < g.size(); ++i)
    (gb[i] ? vf : vb).push_back(gb[i] ? s.data[i] : 1.0 - s.data[i]);
  double mu = double(fg) / g.size();
  double s_obj = mu * object_score(vf) + (1.0 - mu) * object_score(vb);

  // centroid with 1-based rounding; the split line lands in the top/left blocks
  double ry = 0.0, rx = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (gb[std::size_t(y) * w + x]) {
        ry += y + 1;
        rx += x + 1;
      }
  int cy = int(std::floor(ry / fg + 0.5));
  int cx = int(std::floor(rx / fg + 0.5));

  double s_reg = 0.0;
  const int ylim[3] = {0, cy, h}, xlim[3] = {0, cx, w};
  for (int by = 0; by < 2; ++by)
    for (int bx = 0; bx < 2; ++bx) {
      std::vector<double> xs, ys;
      for (int y = ylim[by]; y < ylim[by + 1]; ++y)
        for (int x = xlim[bx]; x < xlim[bx + 1]; ++x) {
          xs.push_back(s.data[std::size_t(y) * w + x]);
          ys.push_back(double(gb[std::size_t(y) * w + x]));
        }
      if (xs.empty()) continue;
      s_reg += (double(xs.size()) / (double(h) * w)) * ssim_block(xs, ys);
    }
  return std::max(0.0, 0.5 * s_obj + 0.5 * s_reg);
}

namespace {

std::vector<uint8_t> boundary4(const std::vector<uint8_t>& m, int h, int w) {
  std::vector<uint8_t> b(m.size(), 0);
  auto at = [&](int y, int x) { return m[std::size_t(y) * w + x]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t v = at(y, x);
      bool edge = (y > 0 && at(y - 1, x) != v) || (y + 1 < h && at(y + 1, x) != v) ||
                  (x > 0 && at(y, x - 1) != v) || (x + 1 < w && at(y, x + 1) != v);
      if (edge) b[std::size_t(y) * w + x] = 1;
    }
  return b;
}

// exact squared Euclidean distance transform, one parabola envelope per line
void dt1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
          std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double sq;
    while (true) {
      sq = ((f[q] + double(q) * q) - (f[v[k]] + double(v[k]) * v[k])) /
           (2.0 * q - 2.0 * v[k]);
      if (sq <= z[k] && k > 0)
        --k;
      else
        break;
    }
    ++k;
    v[k] = q;
    z[k] = sq;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    d[q] = double(q - v[k]) * (q - v[k]) + f[v[k]];
  }
}

std::vector<double> edt_sq(const std::vector<uint8_t>& seed, int h, int w) {
  const double far = 1e20;
  std::vector<double> g(seed.size());
  for (std::size_t i = 0; i < seed.size(); ++i) g[i] = seed[i] ? 0.0 : far;
  int nmax = std::max(h, w);
  std::vector<double> f(nmax), d(nmax), z(nmax + 1);
  std::vector<int> v(nmax);
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) f[y] = g[std::size_t(y) * w + x];
    dt1d(f, d, v, z, h);
    for (int y = 0; y < h; ++y) g[std::size_t(y) * w + x] = d[y];
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) f[x] = g[std::size_t(y) * w + x];
    dt1d(f, d, v, z, w);
    for (int x = 0; x < w; ++x) g[std::size_t(y) * w + x] = d[x];
  }
  return g;
}

}  // namespace

BoundaryAccuracy mba(const Tensor<double>& s, const Tensor<double>& g) {
  check_same_shape(s, g, "mba");
  require_map(s, "mba");
  const int h = g.h, w = g.w;
  auto sb = binarize(s), gb = binarize(g);
  auto bnd = boundary4(gb, h, w);
  auto bs = boundary4(sb, h, w);
  bool any = false;
  for (std::size_t i = 0; i < bnd.size(); ++i) {
    bnd[i] = bnd[i] | bs[i];
    any |= bnd[i] != 0;
  }
  BoundaryAccuracy out;
  if (!any) {
    int64_t ok = 0;
    for (std::size_t i = 0; i < gb.size(); ++i) ok += sb[i] == gb[i];
    out.value = double(ok) / gb.size();
    out.degenerate = true;
    return out;
  }
  auto d2 = edt_sq(bnd, h, w);
  const double hi = std::max(1.0, 0.02 * std::hypot(double(h), double(w)));
  double acc_sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    double r = 1.0 + (hi - 1.0) * i / 4.0;
    int64_t band = 0, ok = 0;
    for (std::size_t p = 0; p < d2.size(); ++p)
      if (std::sqrt(d2[p]) <= r) {
        ++band;
        ok += sb[p] == gb[p];
      }
    acc_sum += band ? double(ok) / band : 0.0;
  }
  out.value = acc_sum / 5.0;
  return out;
}

MetricRow evaluate_pair(const std::string& name, const Tensor<double>& s,
                        const Tensor<double>& g) {
  MetricRow r;
  r.name = name;
  r.s_measure = s_measure(s, g);
  r.f_max = f_max(s, g);
  r.mae = mae(s, g);
  auto b = mba(s, g);
  r.mba = b.value;
  r.mba_degenerate = b.degenerate;
  return r;
}

MetricReport build_report(std::vector<MetricRow> rows) {
  MetricReport rep;
  rep.mean.name = "mean";
  for (const auto& r : rows) {
    rep.mean.s_measure += r.s_measure;
    rep.mean.f_max += r.f_max;
    rep.mean.mae += r.mae;
    rep.mean.mba += r.mba;
    rep.mean.mba_degenerate = rep.mean.mba_degenerate || r.mba_degenerate;
  }
  if (!rows.empty()) {
    rep.mean.s_measure /= rows.size();
    rep.mean.f_max /= rows.size();
    rep.mean.mae /= rows.size();
    rep.mean.mba /= rows.size();
  }
  rep.rows = std::move(rows);
  return rep;
}

}  // namespace pyrsal
