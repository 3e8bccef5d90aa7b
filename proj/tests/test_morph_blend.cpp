#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "pyrsal/blend.hpp"
#include "pyrsal/model.hpp"
#include "pyrsal/morphology.hpp"
#include "pyrsal/rng.hpp"

using namespace pyrsal;

#define CHECK_NEAR(a, b, tol) CHECK(std::abs((a) - (b)) <= (tol))

namespace {

Tensor<float> random_map(Pcg32& rng, int h, int w, float lo = 0.0f,
                         float hi = 1.0f) {
  auto t = Tensor<float>::map2d(h, w);
  for (auto& v : t.data) v = float(rng.uniform(lo, hi));
  return t;
}

// sliding-window max minus min over the footprint, clipped at the border
Tensor<float> bandwidth_oracle(const Tensor<float>& x, int ksize) {
  auto fp = ellipse_footprint(ksize);
  const int r = ksize / 2;
  auto y = Tensor<float>::map2d(x.h, x.w);
  for (int iy = 0; iy < x.h; ++iy)
    for (int ix = 0; ix < x.w; ++ix) {
      float hi = -1e30f, lo = 1e30f;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          int sy = iy + dy, sx = ix + dx;
          if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
          if (!fp.at(0, 0, dy + r, dx + r)) continue;
          hi = std::max(hi, x.at(0, 0, sy, sx));
          lo = std::min(lo, x.at(0, 0, sy, sx));
        }
      y.at(0, 0, iy, ix) = hi - lo;
    }
  return y;
}

ModelConfig tiny_cfg() {
  ModelConfig c;
  c.widths = {8, 8, 16, 16};
  c.decoder_width = 8;
  c.train_h = c.train_w = 64;
  return c;
}

ResizePolicy tiny_policy() {
  ResizePolicy p;
  p.train_h = p.train_w = 64;
  return p;
}

}  // namespace

TEST_CASE("elliptical footprints match the frozen reference grids") {
  const char* want5[] = {"00100", "11111", "11111", "11111", "00100"};
  const char* want9[] = {"000010000", "011111110", "011111110",
                         "111111111", "111111111", "111111111",
                         "011111110", "011111110", "000010000"};
  const char* want17[] = {
      "00000000100000000", "00001111111110000", "00011111111111000",
      "00111111111111100", "01111111111111110", "01111111111111110",
      "11111111111111111", "11111111111111111", "11111111111111111",
      "11111111111111111", "11111111111111111", "01111111111111110",
      "01111111111111110", "00111111111111100", "00011111111111000",
      "00001111111110000", "00000000100000000"};
  struct {
    int k;
    const char** rows;
  } cases[] = {{5, want5}, {9, want9}, {17, want17}};
  for (auto& cs : cases) {
    auto fp = ellipse_footprint(cs.k);
    REQUIRE(fp.h == cs.k);
    REQUIRE(fp.w == cs.k);
    for (int y = 0; y < cs.k; ++y)
      for (int x = 0; x < cs.k; ++x)
        CHECK(int(fp.at(0, 0, y, x)) == cs.rows[y][x] - '0');
  }
  CHECK_THROWS_AS(ellipse_footprint(4), std::invalid_argument);
  CHECK_THROWS_AS(ellipse_footprint(0), std::invalid_argument);
}

TEST_CASE("transition mask equals the sliding max-min oracle") {
  Pcg32 rng(41, 0);
  for (int trial = 0; trial < 20; ++trial) {
    int h = rng.uniform_int(18, 30), w = rng.uniform_int(18, 30);
    auto x = random_map(rng, h, w);
    for (int k : {5, 9, 17}) {
      auto t = transition_mask(x, k);
      auto want = bandwidth_oracle(x, k);
      for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data[i] == want.data[i]);
    }
  }
}

TEST_CASE("transition mask shapes and ranges") {
  SUBCASE("constant maps have no transitions") {
    auto c = Tensor<float>::map2d(20, 20, 0.375f);
    auto t = transition_mask(c, 9);
    for (float v : t.data) CHECK(v == 0.0f);
  }

  SUBCASE("a binary disk yields a ring around its boundary") {
    auto x = Tensor<float>::map2d(32, 32);
    for (int y = 0; y < 32; ++y)
      for (int x2 = 0; x2 < 32; ++x2)
        if ((y - 16) * (y - 16) + (x2 - 16) * (x2 - 16) <= 81)
          x.at(0, 0, y, x2) = 1.0f;
    auto t = transition_mask(x, 5);
    for (float v : t.data) CHECK((v == 0.0f || v == 1.0f));
    CHECK(t.at(0, 0, 16, 16) == 0.0f);  // deep inside
    CHECK(t.at(0, 0, 0, 0) == 0.0f);    // far outside
    CHECK(t.at(0, 0, 16, 7) == 1.0f);   // on the boundary
    int ring = 0;
    for (float v : t.data) ring += v == 1.0f;
    CHECK(ring > 80);
    CHECK(ring < 320);
  }

  SUBCASE("soft ramps stay within range") {
    auto x = Tensor<float>::map2d(16, 16);
    for (int y = 0; y < 16; ++y)
      for (int x2 = 0; x2 < 16; ++x2) x.at(0, 0, y, x2) = x2 / 15.0f;
    auto t = transition_mask(x, 5);
    for (float v : t.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    auto want = bandwidth_oracle(x, 5);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.data[i] == want.data[i]);
  }
}

TEST_CASE("resize planning") {
  ResizePolicy p;

  SUBCASE("worked example with a shorter-side cap") {
    p.L = 810;
    auto t = plan_resize(1920, 1080, p);
    CHECK(!t.skip);
    CHECK(t.pre_h == 1440.0);
    CHECK(t.pre_w == 810.0);
    CHECK(t.h == 1440);
    CHECK(t.w == 800);
  }

  SUBCASE("small inputs are skipped") {
    CHECK(plan_resize(640, 480, p).skip);
    CHECK(plan_resize(480, 640, p).skip);
    CHECK(plan_resize(511, 2000, p).skip);
    CHECK(!plan_resize(512, 2000, p).skip);
  }

  SUBCASE("upscaling never happens") {
    p.L = 1280;
    auto t = plan_resize(4000, 3000, p);
    CHECK(!t.skip);
    CHECK_NEAR(t.pre_h, 4000.0 * 1280.0 / 3000.0, 1e-9);
    CHECK(t.pre_w == 1280.0);
    CHECK(t.h == 1696);
    CHECK(t.w == 1280);

    auto u = plan_resize(600, 700, p);  // shorter side already below L
    CHECK(u.pre_h == 600.0);
    CHECK(u.pre_w == 700.0);
    CHECK(u.h == 608);  // 18.75 rounds up
    CHECK(u.w == 704);  // 21.875 rounds up
  }

  SUBCASE("halfway targets round upward") {
    p.L = 816;
    auto t = plan_resize(1632, 1632, p);
    CHECK(t.pre_h == 816.0);
    CHECK(t.h == 832);
    CHECK(t.w == 832);
  }

  SUBCASE("outputs are grid-aligned") {
    p.L = 777;
    Pcg32 rng(5, 0);
    for (int i = 0; i < 25; ++i) {
      int h = rng.uniform_int(512, 3000), w = rng.uniform_int(512, 3000);
      auto t = plan_resize(h, w, p);
      CHECK(t.h % 32 == 0);
      CHECK(t.w % 32 == 0);
      CHECK(std::min(t.pre_h, t.pre_w) <= 777.0 + 1e-9);
    }
  }
}

TEST_CASE("blended reconstruction identities") {
  auto k = make_gaussian_kernel(7, 1.0);
  TransitionSchedule sched;
  Pcg32 rng(77, 0);

  SUBCASE("zero detail stages collapse to iterated upsampling") {
    BlendInputs in;
    in.s0_lr = random_map(rng, 24, 24, 0.05f, 0.95f);
    in.u2 = Tensor<float>::map2d(16, 16, 0.0f);
    in.u1 = Tensor<float>::map2d(32, 32, 0.0f);
    in.u0 = Tensor<float>::map2d(64, 64, 0.0f);
    auto out = blend_pyramids(in, k, sched, 64, 64);

    auto logit_c = [](Tensor<float> t) {
      for (auto& v : t.data) {
        float c = std::min(std::max(v, 1e-4f), 1.0f - 1e-4f);
        v = std::log(c / (1.0f - c));
      }
      return t;
    };
    auto sig = [](Tensor<float> t) {
      for (auto& v : t.data) v = 1.0f / (1.0f + std::exp(-v));
      return t;
    };
    auto ref = bilinear_plain(in.s0_lr, 8, 8);
    for (int step = 0; step < 3; ++step) ref = sig(expand(logit_c(ref), k));
    REQUIRE(ref.h == 64);
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK_NEAR(out.data[i], ref.data[i], 1e-6);
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }

  SUBCASE("constant seeds suppress all detail") {
    BlendInputs in;
    in.s0_lr = Tensor<float>::map2d(24, 24, 0.7f);
    in.u2 = random_map(rng, 16, 16, -3.0f, 3.0f);
    in.u1 = random_map(rng, 32, 32, -3.0f, 3.0f);
    in.u0 = random_map(rng, 64, 64, -3.0f, 3.0f);
    auto out = blend_pyramids(in, k, sched, 48, 40);
    for (float v : out.data) CHECK_NEAR(v, 0.7f, 1e-5);
  }

  SUBCASE("output stays in range under adversarial details") {
    BlendInputs in;
    in.s0_lr = random_map(rng, 24, 24);
    in.u2 = random_map(rng, 16, 16, -50.0f, 50.0f);
    in.u1 = random_map(rng, 32, 32, -50.0f, 50.0f);
    in.u0 = random_map(rng, 64, 64, -50.0f, 50.0f);
    auto out = blend_pyramids(in, k, sched, 100, 90);
    CHECK(out.h == 100);
    CHECK(out.w == 90);
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("full pipeline honors the skip rule and the stage budget") {
  auto k = make_gaussian_kernel(7, 1.0);
  TransitionSchedule sched;
  auto policy = tiny_policy();
  PyramidSaliencyNet<float> model(tiny_cfg(), 99);
  Pcg32 rng(88, 0);

  SUBCASE("small inputs take the plain path bit for bit") {
    Tensor<float> img(1, 3, 96, 80);
    for (auto& v : img.data) v = float(rng.uniform());
    auto a = blend(model, img, policy, sched, k);
    auto b = plain_saliency(model, img, policy);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
    CHECK(a.h == 96);
    CHECK(a.w == 80);
  }

  SUBCASE("large inputs blend the two passes") {
    policy.L = 96;
    Tensor<float> img(1, 3, 544, 520);
    for (auto& v : img.data) v = float(rng.uniform());
    auto out = blend(model, img, policy, sched, k);
    CHECK(out.h == 544);
    CHECK(out.w == 520);
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      CHECK(std::isfinite(v));
    }

    // the blended result is a pure function of the four admitted stages;
    // the detail pass's own coarse map has no way in
    auto plan = plan_resize(544, 520, policy);
    auto lr_pyr = model.forward(
        make_var(bilinear_plain(img, policy.train_h, policy.train_w)), false);
    auto hr_pyr =
        model.forward(make_var(bilinear_plain(img, plan.h, plan.w)), false);
    hr_pyr.s3->value.fill(std::nanf(""));
    BlendInputs in{lr_pyr.s0->value, hr_pyr.u2->value, hr_pyr.u1->value,
                   hr_pyr.u0->value};
    auto again = blend_pyramids(in, k, sched, 544, 520);
    REQUIRE(again.size() == out.size());
    for (std::size_t i = 0; i < out.size(); ++i)
      CHECK(again.data[i] == out.data[i]);
  }
}
