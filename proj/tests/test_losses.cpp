// Copyright 2026 The hires Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hires/distance_transform.hpp"
#include "hires/losses.hpp"
#include "support.hpp"

using namespace hires;
using hires::testing::leaf;
using hires::testing::random_f64;
using hires::testing::Trial;
using hires::testing::worst_over_trials;

namespace {

LabelMap random_labels(std::int64_t n, std::int64_t h, std::int64_t w, int k, Rng& rng) {
  std::vector<std::int32_t> v(static_cast<std::size_t>(n * h * w));
  for (auto& x : v) x = static_cast<std::int32_t>(rng.below(k));
  return LabelMap(n, h, w, std::move(v));
}

Tensor onehot_tensor(const LabelMap& l, int k) {
  return Tensor::from({l.n, k, l.h, l.w},
                      onehot(l.values, static_cast<int>(l.n), static_cast<int>(l.h), static_cast<int>(l.w), k),
                      DType::F64);
}

// Logits whose softmax is exactly the smoothed target distribution.
Tensor smoothed_logits(const LabelMap& l, int k, double eps) {
  const auto plane = l.h * l.w;
  std::vector<double> v(static_cast<std::size_t>(l.n * k * plane));
  for (std::int64_t b = 0; b < l.n; ++b) {
    for (std::int64_t p = 0; p < plane; ++p) {
      const auto y = lsce_targets(l.values[static_cast<std::size_t>(b * plane + p)], k, eps);
      for (int c = 0; c < k; ++c) v[static_cast<std::size_t>((b * k + c) * plane + p)] = std::log(y[c]);
    }
  }
  return Tensor::from({l.n, k, l.h, l.w}, std::move(v), DType::F64);
}

// Reference cross-entropy with an explicit log-sum-exp per pixel.
double plain_ce(const Tensor& logits, const LabelMap& l) {
  const auto k = logits.dim(1);
  double total = 0.0;
  for (std::int64_t b = 0; b < l.n; ++b) {
    for (std::int64_t y = 0; y < l.h; ++y) {
      for (std::int64_t x = 0; x < l.w; ++x) {
        double m = -1e300;
        for (std::int64_t c = 0; c < k; ++c) m = std::max(m, logits.at({b, c, y, x}));
        double z = 0.0;
        for (std::int64_t c = 0; c < k; ++c) z += std::exp(logits.at({b, c, y, x}) - m);
        total -= logits.at({b, l.at(b, y, x), y, x}) - m - std::log(z);
      }
    }
  }
  return total / static_cast<double>(l.pixels());
}

// Applies one spatial permutation to both a [N,K,H*W]-ordered tensor and its labels.
std::pair<Tensor, LabelMap> permute_pixels(const Tensor& t, const LabelMap& l, const std::vector<std::size_t>& perm) {
  const auto k = t.dim(1);
  const auto plane = static_cast<std::size_t>(l.h * l.w);
  std::vector<double> v(t.data().size());
  std::vector<std::int32_t> lab(l.values.size());
  for (std::int64_t b = 0; b < l.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      lab[b * plane + p] = l.values[b * plane + perm[p]];
      for (std::int64_t c = 0; c < k; ++c) v[(b * k + c) * plane + p] = t.data()[(b * k + c) * plane + perm[p]];
    }
  }
  return {Tensor::from(t.shape(), std::move(v), t.dtype()), LabelMap(l.n, l.h, l.w, std::move(lab))};
}

}  // namespace

TEST_CASE("loss weights reproduce from softmax(1, 1, 0.4)") {
  const auto w = LossConfig::softmax_weights(1.0, 1.0, 0.4);
  const double e = std::exp(1.0), z = 2 * e + std::exp(0.4);
  CHECK(w[0] == doctest::Approx(e / z).epsilon(1e-15));
  CHECK(std::abs(w[0] - 0.3923) < 5e-5);
  CHECK(std::abs(w[1] - 0.3923) < 5e-5);
  CHECK(std::abs(w[2] - 0.2153) < 5e-5);
  const LossConfig d;
  CHECK(std::abs(d.alpha - w[0]) < 5e-5);
  CHECK(std::abs(d.gamma - w[2]) < 5e-5);
  CHECK(d.coarse_ratio == d.refined_ratio);
  CHECK(d.hd_beta == 2.0);
}

TEST_CASE("generalised dice") {
  SUBCASE("3:1 split under uniform probabilities") {
    const LabelMap l(1, 2, 2, {0, 0, 0, 1});
    const auto probs = Tensor::full({1, 2, 2, 2}, 0.5, DType::F64);
    // w = (1/3, 1): numerator 1, denominator 14/3
    CHECK(std::abs(gd_loss(probs, l).item() - 4.0 / 7.0) < 1e-6);
  }
  SUBCASE("perfect prediction and range") {
    Rng rng(1);
    for (int t = 0; t < 20; ++t) {
      const auto l = random_labels(2, 4, 5, 3, rng);
      CHECK(gd_loss(onehot_tensor(l, 3), l).item() == doctest::Approx(0.0).epsilon(1e-12));
      const auto p = softmax(random_f64({2, 3, 4, 5}, rng, -3, 3), 1);
      const double v = gd_loss(p, l).item();
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v > 0.0);
    }
  }
  SUBCASE("absent classes carry no weight") {
    const LabelMap l(1, 1, 4, {0, 0, 1, 1});
    auto p = Tensor::from({1, 3, 1, 4}, {0.6, 0.7, 0.1, 0.2, 0.3, 0.2, 0.8, 0.7, 0.1, 0.1, 0.1, 0.1}, DType::F64);
    const auto full = gd_loss(p, l).item();
    // Same loss computed over the two present classes only.
    const double w0 = 0.5, w1 = 0.5;
    const double num = w0 * (0.6 + 0.7) + w1 * (0.8 + 0.7);
    const double den = w0 * (2 + 0.6 + 0.7 + 0.1 + 0.2) + w1 * (2 + 0.3 + 0.2 + 0.8 + 0.7);
    CHECK(full == doctest::Approx(1 - 2 * num / den).epsilon(1e-12));
  }
  SUBCASE("errors") {
    const LabelMap l(1, 1, 2, {0, 3});
    CHECK_THROWS_AS(gd_loss(Tensor::full({1, 3, 1, 2}, 0.3, DType::F64), l), std::out_of_range);
    CHECK_THROWS_AS(gd_loss(Tensor::full({1, 3, 2, 2}, 0.3, DType::F64), LabelMap(1, 1, 2, {0, 1})), ShapeError);
    CHECK_THROWS(gd_loss(Tensor::zeros({0, 3, 1, 1}, DType::F64), LabelMap(0, 1, 1, {})));
  }
}

TEST_CASE("label-smoothed cross-entropy") {
  SUBCASE("targets") {
    CHECK(lsce_targets(0, 3, 0.1) == std::vector<double>{0.9, 0.05, 0.05});
    const auto t = lsce_targets(2, 5, 0.2);
    CHECK(t[2] == 1.0 - 0.2);
    CHECK(t[0] == 0.2 / 4);
    CHECK_THROWS(lsce_targets(0, 3, 1.0));
    CHECK_THROWS(lsce_targets(0, 3, -0.1));
    CHECK_THROWS(lsce_targets(0, 1, 0.1));
  }
  SUBCASE("epsilon zero is plain cross-entropy") {
    Rng rng(2);
    for (int t = 0; t < 10; ++t) {
      const auto l = random_labels(2, 3, 4, 4, rng);
      const auto logits = random_f64({2, 4, 3, 4}, rng, -5, 5);
      CHECK(std::abs(lsce_loss(logits, l, 0.0).item() - plain_ce(logits, l)) < 1e-9);
    }
  }
  SUBCASE("uniform logits give ln K") {
    Rng rng(3);
    for (int k : {2, 3, 6}) {
      const auto l = random_labels(1, 3, 3, k, rng);
      CHECK(lsce_loss(Tensor::full({1, k, 3, 3}, 0.25, DType::F64), l, 0.0).item() ==
            doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
  }
  SUBCASE("floor is the closed-form entropy and is attained at the targets") {
    for (double eps : {0.05, 0.1, 0.3}) {
      for (int k : {2, 4, 7}) {
        const double closed = -(1 - eps) * std::log(1 - eps) - eps * std::log(eps / (k - 1));
        CHECK(lsce_floor(k, eps) == doctest::Approx(closed).epsilon(1e-12));
        Rng rng(4);
        const auto l = random_labels(1, 3, 3, k, rng);
        Tape::current().reset();
        const auto z = smoothed_logits(l, k, eps).set_requires_grad(true);
        const auto loss = lsce_loss(z, l, eps);
        CHECK(loss.item() == doctest::Approx(closed).epsilon(1e-12));
        backward(loss);
        for (double g : z.grad()) CHECK(std::abs(g) < 1e-6);
        Tape::current().reset();
        const auto other = random_f64({1, k, 3, 3}, rng, -3, 3);
        CHECK(lsce_loss(other, l, eps).item() >= closed);
      }
    }
    CHECK(lsce_floor(4, 0.0) == 0.0);
  }
  SUBCASE("saturated one-hot logits diverge when epsilon is positive") {
    const LabelMap l(1, 1, 2, {0, 1});
    auto at_scale = [&](double s, double eps) {
      return lsce_loss(Tensor::from({1, 2, 1, 2}, {s, 0, 0, s}, DType::F64), l, eps).item();
    };
    CHECK(at_scale(40, 0.0) < 1e-12);
    CHECK(at_scale(40, 0.1) > at_scale(20, 0.1));
  }
  SUBCASE("errors") {
    const LabelMap l(1, 1, 1, {0});
    CHECK_THROWS(lsce_loss(Tensor::zeros({1, 1, 1, 1}, DType::F64), l, 0.1));
    CHECK_THROWS(lsce_loss(Tensor::zeros({1, 2, 1, 1}, DType::F64), l, 1.0));
  }
}

TEST_CASE("edge-aware term") {
  LossConfig cfg;
  SUBCASE("perfect prediction is zero for every class") {
    Rng rng(5);
    const auto l = random_labels(2, 8, 8, 4, rng);
    for (int c = 0; c < 4; ++c) CHECK(cea_loss(onehot_tensor(l, 4), l, c, cfg).item() == 0.0);
  }
  SUBCASE("single wrong pixel against the exact transform") {
    // Class 1 is a 5x5 block inside a 9x9 frame; the centre pixel is predicted as background.
    std::vector<std::int32_t> lab(81, 0);
    for (int y = 2; y < 7; ++y) {
      for (int x = 2; x < 7; ++x) lab[static_cast<std::size_t>(y * 9 + x)] = 1;
    }
    const LabelMap l(1, 9, 9, lab);
    auto probs = onehot_tensor(l, 2);
    auto d = probs.mutable_data();
    d[40] = 1.0;        // class 0 plane, centre
    d[81 + 40] = 0.0;   // class 1 plane, centre
    std::vector<std::uint8_t> gt(81), pred(81);
    for (int i = 0; i < 81; ++i) gt[i] = lab[i] == 1;
    pred = gt;
    pred[40] = 0;
    const int dg = exact_dt(BinaryMask(9, 9, gt), 20).at(4, 4);
    const int ds = exact_dt(BinaryMask(9, 9, pred), 20).at(4, 4);
    CHECK(dg == 3);
    CHECK(ds == 0);
    const double expect = (dg * dg + ds * ds) / 81.0;
    CHECK(cea_loss(probs, l, 1, cfg).item() == doctest::Approx(expect).epsilon(1e-15));
    // The background plane sees the same pixel from the other side.
    CHECK(cea_loss(probs, l, 0, cfg).item() > 0.0);
  }
  SUBCASE("strictly positive on a disagreement with nonzero weight") {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
      const auto l = random_labels(1, 6, 6, 3, rng);
      auto probs = onehot_tensor(l, 3);
      const int c = l.values[0];
      // flip pixel 0 away from its class; D_G there is at least 1
      auto d = probs.mutable_data();
      d[static_cast<std::size_t>(c * 36)] = 0.0;
      d[static_cast<std::size_t>(((c + 1) % 3) * 36)] = 1.0;
      CHECK(cea_loss(probs, l, c, cfg).item() > 0.0);
    }
  }
  SUBCASE("sampled class is reproducible and drawn from those present") {
    Rng rng(7);
    const auto l = random_labels(2, 8, 8, 3, rng);
    const auto p = softmax(random_f64({2, 3, 8, 8}, rng), 1);
    Rng a(99), b(99);
    CeaInfo ia, ib;
    CHECK(cea_loss(p, l, cfg, a, &ia).item() == cea_loss(p, l, cfg, b, &ib).item());
    CHECK(ia.cls == ib.cls);
    std::vector<int> seen(3, 0);
    for (int t = 0; t < 200; ++t) {
      CeaInfo info;
      cea_loss(p, l, cfg, a, &info);
      ++seen[static_cast<std::size_t>(info.cls)];
    }
    for (int s : seen) CHECK(s > 30);
  }
  SUBCASE("no eligible class returns zero with a flag") {
    cfg.cea_exclude_background = true;
    const LabelMap l(1, 2, 2, {0, 0, 0, 0});
    Rng rng(8);
    CeaInfo info;
    CHECK(cea_loss(Tensor::full({1, 2, 2, 2}, 0.5, DType::F64), l, cfg, rng, &info).item() == 0.0);
    CHECK(info.skipped);
  }
  SUBCASE("flip equivariance") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
      const auto l = random_labels(1, 7, 9, 3, rng);
      const auto p = softmax(random_f64({1, 3, 7, 9}, rng, -3, 3), 1);
      std::vector<std::size_t> mirror(63);
      for (std::size_t i = 0; i < 63; ++i) mirror[i] = (i / 9) * 9 + (8 - i % 9);
      const auto [pf, lf] = permute_pixels(p, l, mirror);
      for (int c = 0; c < 3; ++c) {
        CHECK(cea_loss(pf, lf, c, cfg).item() == doctest::Approx(cea_loss(p, l, c, cfg).item()).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("pixel permutation invariance of the region losses") {
  Rng rng(10);
  for (int t = 0; t < 10; ++t) {
    const auto l = random_labels(2, 4, 5, 3, rng);
    const auto z = random_f64({2, 3, 4, 5}, rng, -2, 2);
    std::vector<std::size_t> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[static_cast<std::size_t>(rng.below(static_cast<std::int64_t>(i + 1)))]);
    const auto [zp, lp] = permute_pixels(z, l, perm);
    CHECK(gd_loss(softmax(zp, 1), lp).item() == doctest::Approx(gd_loss(softmax(z, 1), l).item()).epsilon(1e-12));
    CHECK(lsce_loss(zp, lp, 0.1).item() == doctest::Approx(lsce_loss(z, l, 0.1).item()).epsilon(1e-12));
  }
}

TEST_CASE("combined loss") {
  Rng rng(11);
  const auto l = random_labels(1, 8, 8, 4, rng);
  const SegOutput out{random_f64({1, 4, 8, 8}, rng, -2, 2), random_f64({1, 4, 8, 8}, rng, -2, 2)};
  LossConfig cfg;

  SUBCASE("weights only rescale the total") {
    LossConfig ones = cfg;
    ones.alpha = ones.beta_w = ones.gamma = 1.0;
    Rng a(1), b(1);
    const auto x = combined_loss(out, l, cfg, a), y = combined_loss(out, l, ones, b);
    CHECK(x.cea.cls == y.cea.cls);
    CHECK(x.coarse.gd == y.coarse.gd);
    CHECK(x.coarse.lsce == y.coarse.lsce);
    CHECK(x.refined.cea == y.refined.cea);
    auto weighted = [&](const LossTerms& t, const LossConfig& c) { return c.alpha * t.gd + c.beta_w * t.lsce + c.gamma * t.cea; };
    CHECK(x.total.item() == doctest::Approx(weighted(x.coarse, cfg) + weighted(x.refined, cfg)).epsilon(1e-12));
    CHECK(y.total.item() == doctest::Approx(weighted(y.coarse, ones) + weighted(y.refined, ones)).epsilon(1e-12));
  }
  SUBCASE("identical heads double the coarse term") {
    Rng a(2);
    const auto r = combined_loss({out.coarse, out.coarse}, l, cfg, a);
    CHECK(r.total.item() == doctest::Approx(2 * r.coarse.weighted).epsilon(1e-12));
  }
  SUBCASE("output ratio") {
    cfg.refined_ratio = 0.4;
    Rng a(3);
    const auto r = combined_loss(out, l, cfg, a);
    CHECK(r.total.item() == doctest::Approx(r.coarse.weighted + 0.4 * r.refined.weighted).epsilon(1e-12));
  }
  SUBCASE("smoothed-target logits leave the floor as the only cross-entropy cost") {
    const auto z = smoothed_logits(l, 4, cfg.epsilon);
    Rng a(4);
    const auto r = combined_loss({z, z}, l, cfg, a);
    CHECK(r.coarse.lsce == doctest::Approx(lsce_floor(4, cfg.epsilon)).epsilon(1e-12));
    // argmax is still the true class, so the thresholded mask is exact
    CHECK(r.coarse.gd > 0.0);
    CHECK(r.coarse.gd < 0.2);
  }
  SUBCASE("invalid configuration") {
    cfg.gamma = 0.0;
    Rng a(5);
    CHECK_THROWS(combined_loss(out, l, cfg, a));
    cfg = LossConfig{};
    cfg.epsilon = 1.0;
    CHECK_THROWS(combined_loss(out, l, cfg, a));
  }
}

TEST_CASE("loss gradients match finite differences") {
  SUBCASE("generalised dice through softmax") {
    const auto worst = worst_over_trials(10, 12, [](Rng& rng) {
      const auto z = leaf({1, 3, 4, 4}, rng, -2, 2);
      const auto l = random_labels(1, 4, 4, 3, rng);
      return Trial{{z}, [z, l] { return gd_loss(softmax(z, 1), l); }};
    });
    CHECK(worst < 1e-4);
  }
  SUBCASE("label-smoothed cross-entropy") {
    const auto worst = worst_over_trials(10, 13, [](Rng& rng) {
      const auto z = leaf({2, 4, 3, 3}, rng, -2, 2);
      const auto l = random_labels(2, 3, 3, 4, rng);
      return Trial{{z}, [z, l] { return lsce_loss(z, l, 0.1); }};
    });
    CHECK(worst < 1e-4);
  }
  SUBCASE("edge-aware term") {
    const auto worst = worst_over_trials(10, 14, [](Rng& rng) {
      const auto z = leaf({1, 3, 6, 6}, rng, -2, 2);
      const auto l = random_labels(1, 6, 6, 3, rng);
      const int c = static_cast<int>(rng.below(3));
      return Trial{{z}, [z, l, c] { return cea_loss(softmax(z, 1), l, c, LossConfig{}); }};
    });
    CHECK(worst < 1e-4);
  }
  SUBCASE("combined") {
    const auto worst = worst_over_trials(10, 15, [](Rng& rng) {
      const auto a = leaf({1, 3, 6, 6}, rng, -2, 2);
      const auto b = leaf({1, 3, 6, 6}, rng, -2, 2);
      const auto l = random_labels(1, 6, 6, 3, rng);
      return Trial{{a, b}, [a, b, l] {
                     Rng r(1);
                     return combined_loss({a, b}, l, LossConfig{}, r).total;
                   }};
    });
    CHECK(worst < 1e-4);
  }
}
