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

#include "hires/moco.hpp"
#include "hires/trainer.hpp"
#include "support.hpp"

using namespace hires;
using hires::testing::leaf;
using hires::testing::random_f64;
using hires::testing::Trial;
using hires::testing::worst_over_trials;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor unit_rows(std::int64_t b, std::int64_t d, Rng& rng) { return l2_normalize(random_f64({b, d}, rng)); }

}  // namespace

TEST_CASE("augmented pairs") {
  Rng rng(1);
  const auto img = random_f64({3, 16, 16}, rng, 0, 1);
  SUBCASE("identity options give the source twice") {
    Rng r(5);
    const auto p = augment_pair(img, r, AugmentOptions::identity());
    CHECK(values(p.view_a) == values(img));
    CHECK(values(p.view_b) == values(img));
  }
  SUBCASE("shapes, determinism and independence") {
    bool differ = false;
    for (std::uint64_t s = 0; s < 20; ++s) {
      Rng a(s), b(s);
      const auto p = augment_pair(img, a), q = augment_pair(img, b);
      CHECK(p.view_a.shape() == img.shape());
      CHECK(p.view_b.shape() == img.shape());
      CHECK(values(p.view_a) == values(q.view_a));
      CHECK(values(p.view_b) == values(q.view_b));
      differ = differ || values(p.view_a) != values(p.view_b);
    }
    CHECK(differ);
  }
  SUBCASE("unit scale without flips or jitter is exact") {
    AugmentOptions o = AugmentOptions::identity();
    o.crop_resize = true;
    o.scales = {1.0};
    Rng r(6);
    CHECK(values(augment_view(img, r, o)) == values(img));
  }
}

TEST_CASE("InfoNCE") {
  SUBCASE("one orthogonal negative at unit temperature") {
    const auto q = Tensor::from({1, 2}, {1, 0}, DType::F64);
    const auto queue = Tensor::from({2, 1}, {0, 1}, DType::F64);
    const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
    CHECK(expect == doctest::Approx(0.3133).epsilon(1e-4));
    CHECK(std::abs(infonce(q, q, queue, 1.0).item() - expect) < 1e-12);
    CHECK(std::abs(infonce(q, q, queue, 1.0).item() - 0.3133) < 1e-4);
  }
  SUBCASE("empty queue") {
    const auto q = Tensor::from({2, 2}, {1, 0, 0, 1}, DType::F64);
    CHECK(infonce(q, q, Tensor::zeros({2, 0}, DType::F64), 0.2).item() == 0.0);
  }
  SUBCASE("monotone in the positive similarity") {
    const auto queue = Tensor::from({2, 2}, {0.6, -1, 0.8, 0}, DType::F64);
    double prev = 1e300;
    for (int i = 0; i <= 10; ++i) {
      const double a = 3.14159 * (1.0 - i / 10.0);
      const auto q = Tensor::from({1, 2}, {1, 0}, DType::F64);
      const auto k = Tensor::from({1, 2}, {std::cos(a), std::sin(a)}, DType::F64);
      const double v = infonce(q, k, queue, 0.5).item();
      CHECK(v < prev);
      prev = v;
    }
  }
  SUBCASE("large temperature approaches ln(negatives + 1)") {
    Rng rng(2);
    const auto q = unit_rows(4, 8, rng), k = unit_rows(4, 8, rng);
    const auto queue = transpose(unit_rows(31, 8, rng), 0, 1);
    const double v = infonce(q, k, queue, 1e4).item();
    CHECK(std::abs(v - std::log(32.0)) < 1e-3);
    CHECK(v < std::log(32.0) + 1e-3);
  }
  SUBCASE("only the query carries gradient") {
    Rng rng(3);
    Tape::current().reset();
    const auto q = leaf({3, 4}, rng);
    const auto k = leaf({3, 4}, rng);
    const auto queue = leaf({5, 4}, rng);
    backward(infonce(l2_normalize(q), l2_normalize(k), transpose(l2_normalize(queue), 0, 1), 0.2));
    CHECK(q.has_grad());
    CHECK_FALSE(k.has_grad());
    CHECK_FALSE(queue.has_grad());
    Tape::current().reset();
  }
  SUBCASE("gradients match finite differences") {
    const auto worst = worst_over_trials(10, 4, [](Rng& rng) {
      const auto q = leaf({3, 5}, rng);
      const auto k = unit_rows(3, 5, rng);
      const auto queue = transpose(unit_rows(6, 5, rng), 0, 1);
      return Trial{{q}, [q, k, queue] { return infonce(l2_normalize(q), k, queue, 0.2); }};
    });
    CHECK(worst < 1e-4);
  }
  CHECK_THROWS(infonce(Tensor::zeros({1, 2}), Tensor::zeros({1, 2}), Tensor::zeros({2, 1}), 0.0));
}

TEST_CASE("momentum update") {
  Rng rng(5);
  auto k = random_f64({3, 4}, rng), q = random_f64({3, 4}, rng);
  SUBCASE("m = 0 copies the query") {
    momentum_update({k}, {q}, 0.0);
    CHECK(values(k) == values(q));
  }
  SUBCASE("single step arithmetic") {
    auto a = Tensor::full({2}, 1.0, DType::F64);
    momentum_update({a}, {Tensor::zeros({2}, DType::F64)}, 0.999);
    CHECK(a.data()[0] == 0.999);
    auto b = Tensor::full({2}, 1.0, DType::F32);
    momentum_update({b}, {Tensor::zeros({2}, DType::F32)}, 0.999);
    CHECK(b.data()[0] == static_cast<double>(0.999f));
  }
  SUBCASE("gap shrinks geometrically") {
    const double m = 0.9;
    const auto gap0 = std::abs(k.data()[0] - q.data()[0]);
    for (int t = 1; t <= 30; ++t) {
      momentum_update({k}, {q}, m);
      CHECK(std::abs(k.data()[0] - q.data()[0]) == doctest::Approx(gap0 * std::pow(m, t)).epsilon(1e-9));
    }
  }
  CHECK_THROWS(momentum_update({k}, {q}, 1.0));
  CHECK_THROWS(momentum_update({k}, {q}, -0.1));
  CHECK_THROWS(momentum_update({k}, {random_f64({4, 3}, rng)}, 0.5));
}

TEST_CASE("queue ring") {
  MoCoConfig cfg;
  cfg.queue_size = 4;
  Rng rng(6);
  auto st = MoCoState::create(cfg, 3, rng);
  REQUIRE(st.queue.shape() == Shape{3, 4});
  for (std::int64_t c = 0; c < 4; ++c) {
    double n2 = 0.0;
    for (std::int64_t r = 0; r < 3; ++r) n2 += st.queue.at({r, c}) * st.queue.at({r, c});
    CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-5);
  }
  std::vector<Tensor> pushes;
  for (int i = 0; i < 3; ++i) {
    pushes.push_back(unit_rows(2, 3, rng));
    queue_push(st, pushes.back());
    CHECK(st.ptr == (2 * (i + 1)) % 4);
  }
  // Third push overwrote the first two columns; columns 2-3 still hold push 2.
  for (std::int64_t r = 0; r < 3; ++r) {
    CHECK(st.queue.at({r, 0}) == doctest::Approx(pushes[2].at({0, r})).epsilon(1e-6));
    CHECK(st.queue.at({r, 1}) == doctest::Approx(pushes[2].at({1, r})).epsilon(1e-6));
    CHECK(st.queue.at({r, 2}) == doctest::Approx(pushes[1].at({0, r})).epsilon(1e-6));
    CHECK(st.queue.at({r, 3}) == doctest::Approx(pushes[1].at({1, r})).epsilon(1e-6));
  }
  CHECK_THROWS_AS(queue_push(st, unit_rows(2, 5, rng)), ShapeError);
  cfg.tau = 0.0;
  CHECK_THROWS(MoCoState::create(cfg, 3, rng));
}

TEST_CASE("moco steps") {
  MoCoConfig cfg;
  cfg.queue_size = 8;
  cfg.momentum = 0.9;
  Rng rng(7);
  ToyEncoder query(4, 1, 6, 11), key(4, 1, 6, 99);
  init_key_encoder(key, query);
  const auto initial_k = values(key.params().learnable()[0]);
  CHECK(initial_k == values(query.params().learnable()[0]));
  for (const auto& t : key.params().learnable()) CHECK_FALSE(t.requires_grad());
  CHECK(query.params().find("funnel.stem1.conv.weight") != nullptr);
  CHECK(query.params().find("funnel.ib0.expand.weight") != nullptr);

  auto st = MoCoState::create(cfg, 6, rng);
  const auto set = two_cluster_images(4, 16, 3);
  std::vector<Tensor> keys;
  for (int t = 0; t < 6; ++t) {
    const auto r = moco_step(st, query, key, slice(set.images, 0, (t % 2) * 2, 2), rng);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss > 0.0);
    if (t == 0) CHECK(r.loss < std::log(1.0 + 8.0) + 1.0 / cfg.tau);
    keys.push_back(r.keys);
    for (const auto& p : key.params().learnable()) CHECK_FALSE(p.has_grad());
  }
  CHECK(values(key.params().learnable()[0]) != initial_k);
  CHECK(st.steps == 6);
  CHECK(st.ptr == 12 % 8);
  // Ring reconstruction: the last four batches, oldest at ptr.
  for (int col = 0; col < 8; ++col) {
    const int age = (col - static_cast<int>(st.ptr) + 8) % 8;  // 0 = oldest surviving key
    const auto& batch = keys[static_cast<std::size_t>(2 + age / 2)];
    for (std::int64_t r = 0; r < 6; ++r) {
      CHECK(st.queue.at({r, col}) == doctest::Approx(batch.at({age % 2, r})).epsilon(1e-6));
    }
  }
}

TEST_CASE("momentum one half keeps the key encoder between old and new query") {
  MoCoConfig cfg;
  cfg.queue_size = 4;
  cfg.momentum = 0.5;
  Rng rng(8);
  ToyEncoder query(4, 0, 4, 12), key(4, 0, 4, 0);
  init_key_encoder(key, query);
  auto st = MoCoState::create(cfg, 4, rng);
  const auto before = values(query.params().learnable()[0]);
  moco_step(st, query, key, two_cluster_images(2, 16, 4).images, rng);
  const auto after = values(query.params().learnable()[0]);
  const auto k = values(key.params().learnable()[0]);
  for (std::size_t i = 0; i < k.size(); ++i) {
    CHECK(k[i] == doctest::Approx(0.5 * before[i] + 0.5 * after[i]).epsilon(1e-6));
  }
}

TEST_CASE("two-cluster images") {
  const auto a = two_cluster_images(6, 16, 1), b = two_cluster_images(6, 16, 1);
  CHECK(values(a.images) == values(b.images));
  CHECK(a.images.shape() == Shape{6, 3, 16, 16});
  CHECK(a.cluster == std::vector<int>{0, 1, 0, 1, 0, 1});
  for (double v : a.images.data()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("short pretraining run is deterministic") {
  PretrainConfig cfg;
  cfg.steps = 5;
  cfg.image_count = 4;
  cfg.batch_size = 2;
  cfg.image_size = 16;
  cfg.moco.queue_size = 8;
  ToyEncoder a(cfg.channels, cfg.ib_blocks, cfg.feature_dim, cfg.model_seed);
  ToyEncoder b(cfg.channels, cfg.ib_blocks, cfg.feature_dim, cfg.model_seed);
  const auto ra = pretrain(a, cfg), rb = pretrain(b, cfg);
  CHECK(ra.losses.size() == 5);
  CHECK(ra.losses == rb.losses);
  CHECK(ra.separation == rb.separation);
}
