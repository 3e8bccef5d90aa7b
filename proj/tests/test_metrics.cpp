#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "pyrsal/metrics.hpp"
#include "pyrsal/rng.hpp"

using namespace pyrsal;

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))

namespace {

Tensor<double> s_pattern8() {
  auto t = Tensor<double>::map2d(8, 8);
  for (int i = 0; i < 64; ++i) t.data[i] = 0.5 + 0.35 * std::sin(0.7 * i + 0.3);
  return t;
}

Tensor<double> g_disk8() {
  auto g = Tensor<double>::map2d(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if ((y - 3.5) * (y - 3.5) + (x - 3.5) * (x - 3.5) <= 6.25)
        g.at(0, 0, y, x) = 1.0;
  return g;
}

Tensor<double> s_rational16() {
  auto t = Tensor<double>::map2d(16, 16);
  for (int i = 0; i < 256; ++i) t.data[i] = ((i * 37) % 256) / 255.0;
  return t;
}

Tensor<double> g_blobs16() {
  auto g = Tensor<double>::map2d(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      if ((y - 5) * (y - 5) + (x - 5) * (x - 5) <= 9 ||
          (y - 11) * (y - 11) + (x - 12) * (x - 12) <= 4)
        g.at(0, 0, y, x) = 1.0;
  return g;
}

Tensor<double> g_disk64() {
  auto g = Tensor<double>::map2d(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if ((y - 32) * (y - 32) + (x - 32) * (x - 32) <= 400)
        g.at(0, 0, y, x) = 1.0;
  return g;
}

Tensor<double> shift_right(const Tensor<double>& g) {
  auto s = Tensor<double>::map2d(g.h, g.w);
  for (int y = 0; y < g.h; ++y)
    for (int x = 1; x < g.w; ++x) s.at(0, 0, y, x) = g.at(0, 0, y, x - 1);
  return s;
}

Tensor<double> invert(const Tensor<double>& g) {
  auto s = g;
  for (auto& v : s.data) v = 1.0 - v;
  return s;
}

// brute-force band accuracy: per-pixel minimum distance to any boundary pixel
double mba_oracle(const Tensor<double>& s, const Tensor<double>& g) {
  const int h = g.h, w = g.w;
  auto bin = [](double v) { return v >= 0.5 ? 1 : 0; };
  std::vector<int> sb(h * w), gb(h * w);
  for (int i = 0; i < h * w; ++i) {
    sb[i] = bin(s.data[i]);
    gb[i] = bin(g.data[i]);
  }
  std::vector<std::pair<int, int>> bnd;
  for (auto* m : {&gb, &sb})
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int v = (*m)[y * w + x];
        if ((y > 0 && (*m)[(y - 1) * w + x] != v) ||
            (y + 1 < h && (*m)[(y + 1) * w + x] != v) ||
            (x > 0 && (*m)[y * w + x - 1] != v) ||
            (x + 1 < w && (*m)[y * w + x + 1] != v))
          bnd.emplace_back(y, x);
      }
  REQUIRE(!bnd.empty());
  double hi = std::max(1.0, 0.02 * std::hypot(double(h), double(w)));
  double acc_sum = 0.0;
  for (int i = 0; i < 5; ++i) {
    double r = 1.0 + (hi - 1.0) * i / 4.0;
    long band = 0, ok = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double best = 1e30;
        for (auto [by, bx] : bnd)
          best = std::min(best, double(y - by) * (y - by) +
                                    double(x - bx) * (x - bx));
        if (std::sqrt(best) <= r) {
          ++band;
          ok += sb[y * w + x] == gb[y * w + x];
        }
      }
    acc_sum += band ? double(ok) / band : 0.0;
  }
  return acc_sum / 5.0;
}

}  // namespace

TEST_CASE("mean absolute error") {
  auto g = g_disk8();
  CHECK(mae(g, g) == 0.0);
  CHECK_NEAR(mae(invert(g), g), 1.0, 1e-15);

  Pcg32 rng(7, 0);
  auto s = Tensor<double>::map2d(4, 4);
  auto t = Tensor<double>::map2d(4, 4);
  for (int i = 0; i < 16; ++i) {
    s.data[i] = rng.uniform();
    t.data[i] = rng.uniform();
  }
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) acc += std::abs(s.data[i] - t.data[i]);
  CHECK_NEAR(mae(s, t), acc / 16.0, 1e-15);

  // linear in the residual magnitude
  auto zero = Tensor<double>::map2d(4, 4, 0.0);
  auto half = s;
  for (auto& v : half.data) v *= 0.5;
  CHECK_NEAR(mae(half, zero), 0.5 * mae(s, zero), 1e-15);

  CHECK_THROWS_AS(mae(s, Tensor<double>::map2d(4, 5)), std::invalid_argument);
}

TEST_CASE("maximum F-measure") {
  auto g16 = g_blobs16();

  SUBCASE("matching binary masks peak at one") {
    CHECK_NEAR(f_max(g16, g16), 1.0, 1e-12);
  }

  SUBCASE("frozen reference values") {
    CHECK_NEAR(f_max(s_rational16(), g16), 0.227803738317757, 1e-12);
    CHECK_NEAR(f_max(s_pattern8(), g_disk8()), 0.408805031446541, 1e-12);
  }

  SUBCASE("constant half prediction against a half-ones mask") {
    auto s = Tensor<double>::map2d(16, 16, 0.5);
    auto g = Tensor<double>::map2d(16, 16);
    for (int i = 0; i < 128; ++i) g.data[i] = 1.0;
    CHECK_NEAR(f_max(s, g), 0.65 / 1.15, 1e-6);
    CHECK_NEAR(f_max(s, g), 0.565217391304348, 1e-12);
  }

  SUBCASE("empty ground truth scores zero") {
    CHECK(f_max(s_rational16(), Tensor<double>::map2d(16, 16, 0.0)) == 0.0);
  }

  SUBCASE("halving a grid-valued prediction sweeps the same masks") {
    auto s = Tensor<double>::map2d(16, 16);
    for (int i = 0; i < 256; ++i) s.data[i] = 2.0 * ((i * 53) % 128) / 255.0;
    auto half = s;
    for (auto& v : half.data) v *= 0.5;
    CHECK(f_max(s, g16) == f_max(half, g16));
  }

  SUBCASE("curve shape") {
    auto c = f_curve(g16, g16);
    REQUIRE(c.size() == 256);
    for (double v : c) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(c[255] == 0.0);  // nothing exceeds 1.0, empty prediction
  }
}

TEST_CASE("structure similarity measure") {
  auto g8 = g_disk8();

  SUBCASE("frozen reference values") {
    CHECK_NEAR(s_measure(s_pattern8(), g8), 0.386298411261677, 1e-6);
    CHECK_NEAR(s_measure(s_rational16(), g_blobs16()), 0.348518120255108,
               1e-6);
  }

  SUBCASE("perfect and anti-correlated predictions") {
    CHECK_NEAR(s_measure(g8, g8), 1.0, 1e-6);
    double inv = s_measure(invert(g8), g8);
    CHECK(inv < 0.5);
    CHECK(inv == 0.0);  // clamped from below
  }

  SUBCASE("degenerate ground truths score by mean prediction") {
    auto s = Tensor<double>::map2d(8, 8, 0.3);
    CHECK_NEAR(s_measure(s, Tensor<double>::map2d(8, 8, 0.0)), 0.7, 1e-12);
    CHECK_NEAR(s_measure(s, Tensor<double>::map2d(8, 8, 1.0)), 0.3, 1e-12);
  }

  SUBCASE("rejects non-map shapes") {
    Tensor<double> bad(2, 1, 4, 4, 0.5);
    CHECK_THROWS_AS(s_measure(bad, bad), std::invalid_argument);
  }
}

TEST_CASE("mean boundary accuracy") {
  auto gd = g_disk64();

  SUBCASE("frozen reference values") {
    auto r = mba(shift_right(gd), gd);
    CHECK(!r.degenerate);
    CHECK_NEAR(r.value, 0.856651451696391, 1e-9);
    auto q = mba(s_rational16(), g_blobs16());
    CHECK(!q.degenerate);
    CHECK_NEAR(q.value, 0.515625, 1e-12);
  }

  SUBCASE("perfect, inverted and degenerate cases") {
    CHECK(mba(gd, gd).value == 1.0);
    CHECK(mba(invert(gd), gd).value == 0.0);
    auto z = Tensor<double>::map2d(8, 8, 0.0);
    auto r = mba(z, z);
    CHECK(r.degenerate);
    CHECK(r.value == 1.0);
  }

  SUBCASE("agrees with the brute-force band oracle") {
    CHECK_NEAR(mba(shift_right(gd), gd).value, mba_oracle(shift_right(gd), gd),
               1e-12);
    Pcg32 rng(19, 0);
    for (int trial = 0; trial < 3; ++trial) {
      auto s = Tensor<double>::map2d(24, 24);
      auto g = Tensor<double>::map2d(24, 24);
      int cy = rng.uniform_int(8, 16), cx = rng.uniform_int(8, 16);
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
          g.at(0, 0, y, x) =
              (y - cy) * (y - cy) + (x - cx) * (x - cx) <= 36 ? 1.0 : 0.0;
          s.at(0, 0, y, x) = rng.uniform();
        }
      CHECK_NEAR(mba(s, g).value, mba_oracle(s, g), 1e-12);
    }
  }
}

TEST_CASE("pair evaluation and report aggregation") {
  auto gd = g_disk64();
  auto row = evaluate_pair("ideal", gd, gd);
  CHECK_NEAR(row.s_measure, 1.0, 1e-6);
  CHECK(row.f_max == 1.0);
  CHECK(row.mae == 0.0);
  CHECK(row.mba == 1.0);
  CHECK(!row.mba_degenerate);

  auto row2 = evaluate_pair("shifted", shift_right(gd), gd);
  auto rep = build_report({row, row2});
  CHECK(rep.rows.size() == 2);
  CHECK(rep.mean.name == "mean");
  CHECK_NEAR(rep.mean.mae, 0.5 * (row.mae + row2.mae), 1e-15);
  CHECK_NEAR(rep.mean.mba, 0.5 * (row.mba + row2.mba), 1e-15);
  CHECK_NEAR(rep.mean.f_max, 0.5 * (row.f_max + row2.f_max), 1e-15);

  auto flipped = build_report({row2, row});
  CHECK_NEAR(flipped.mean.s_measure, rep.mean.s_measure, 1e-15);
}
