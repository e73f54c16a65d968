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

#include "hires/losses.hpp"
#include "hires/network.hpp"
#include "support.hpp"

using namespace hires;
using hires::testing::project;
using hires::testing::random_f64;

namespace {

Tensor param(const HiResNet& net, const std::string& name) {
  const auto* e = net.params().find(name);
  REQUIRE_MESSAGE(e != nullptr, name);
  return e->tensor;
}

void fill(Tensor t, double v) {
  for (auto& x : t.mutable_data()) x = v;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Small enough for finite differences over every parameter tensor.
NetworkConfig tiny() {
  NetworkConfig c;
  c.channels = {2, 4, 4};
  c.blocks = {1, 1, 1};
  c.modules = {1, 1};
  c.window = 2;
  c.heads = 1;
  c.head_dim = 2;
  c.dw_kernel = 3;
  c.se_ratio = 2;
  c.num_classes = 3;
  c.input_h = 32;
  c.input_w = 32;
  return c;
}

}  // namespace

TEST_CASE("shape ladder") {
  NoGradGuard ng;
  SUBCASE("desk") {
    HiResNet net(NetworkConfig::desk(), 1);
    Rng rng(2);
    const auto img = random_f64({1, 3, 64, 64}, rng);
    const auto stem = net.funnel_forward(img, false);
    CHECK(stem.shape() == Shape{1, 8, 16, 16});
    const auto b = net.multi_branch_forward(stem, false);
    REQUIRE(b.size() == 3);
    CHECK(b[0].shape() == Shape{1, 8, 16, 16});
    CHECK(b[1].shape() == Shape{1, 16, 8, 8});
    CHECK(b[2].shape() == Shape{1, 32, 4, 4});
    const auto out = net.refine(b, false);
    CHECK(out.coarse.shape() == Shape{1, 4, 64, 64});
    CHECK(out.refined.shape() == Shape{1, 4, 64, 64});
    for (double v : out.coarse.data()) REQUIRE(std::isfinite(v));
    for (double v : out.refined.data()) REQUIRE(std::isfinite(v));
  }
  SUBCASE("new branch steps") {
    HiResNet net(NetworkConfig::desk(), 1);
    Rng rng(3);
    const auto x = random_f64({1, 8, 16, 16}, rng);
    const auto once = net.new_branch(1, x, false);
    CHECK(once.shape() == Shape{1, 16, 8, 8});
    CHECK(net.new_branch(2, once, false).shape() == Shape{1, 32, 4, 4});
    CHECK_THROWS_AS(net.new_branch(1, random_f64({1, 8, 5, 6}, rng), false), ShapeError);
  }
  SUBCASE("full-size channel ladder on a single image") {
    auto cfg = NetworkConfig::full();
    HiResNet net(cfg, 1);
    Rng rng(4);
    const auto stem = net.funnel_forward(random_f64({1, 3, 224, 224}, rng), false);
    CHECK(stem.shape() == Shape{1, 48, 56, 56});
    const auto b = net.multi_branch_forward(stem, false);
    REQUIRE(b.size() == 3);
    CHECK(b[0].shape() == Shape{1, 48, 56, 56});
    CHECK(b[1].shape() == Shape{1, 96, 28, 28});
    CHECK(b[2].shape() == Shape{1, 192, 14, 14});
  }
  SUBCASE("indivisible inputs") {
    HiResNet net(NetworkConfig::desk(), 1);
    Rng rng(5);
    CHECK_THROWS_AS(net.funnel_forward(random_f64({1, 3, 30, 32}, rng), false), ShapeError);
    CHECK_THROWS_AS(net.forward(random_f64({1, 3, 48, 48}, rng), false), ShapeError);
    CHECK_THROWS_AS(net.multi_branch_forward(random_f64({1, 4, 16, 16}, rng), false), ShapeError);
  }
}

TEST_CASE("config validation") {
  auto c = NetworkConfig::desk();
  c.input_h = 72;
  CHECK_THROWS(c.validate());
  c = NetworkConfig::desk();
  c.num_classes = 1;
  CHECK_THROWS(c.validate());
  c = NetworkConfig::desk();
  c.channels = {6, 16, 32};
  CHECK_THROWS(c.validate());
  c = NetworkConfig::desk();
  for (const auto& [k, v] : NetworkConfig::full().to_kv()) c.apply_kv(k, v);
  CHECK(c.to_kv() == NetworkConfig::full().to_kv());
  CHECK_THROWS(c.apply_kv("no_such_key", "1"));
}

TEST_CASE("funnel without IB blocks is the plain double downsample") {
  auto cfg = NetworkConfig::desk();
  cfg.blocks[0] = 0;
  HiResNet net(cfg, 9, DType::F64);
  Rng rng(10);
  const auto img = random_f64({2, 3, 16, 16}, rng);
  auto down = [&](const Tensor& x, const std::string& stem, std::int64_t cout) {
    BatchNormState st{Tensor::zeros({x.dim(1)}, DType::F64), Tensor::full({x.dim(1)}, 1.0, DType::F64)};
    const auto bn = batchnorm2d(x, param(net, stem + ".bn.gamma"), param(net, stem + ".bn.beta"), st, true);
    ConvSpec spec{cout, 3, 3, 2, 2, 1, 1, 1};
    return gelu(conv2d(bn, param(net, stem + ".conv.weight"), param(net, stem + ".conv.bias"), spec));
  };
  const auto expect = down(down(img, "funnel.stem1", 8), "funnel.stem2", 8);
  const auto got = net.funnel_forward(img, true);
  REQUIRE(got.shape() == Shape{2, 8, 4, 4});
  CHECK(values(got) == values(expect));
}

TEST_CASE("funnel gradient reaches the first convolution") {
  HiResNet net(NetworkConfig::desk(), 11);
  Rng rng(12);
  const auto img = random_f64({1, 3, 16, 16}, rng);
  Tape::current().reset();
  backward(sum(square(net.funnel_forward(img, true))));
  bool any = false;
  for (double g : param(net, "funnel.stem1.conv.weight").grad()) any = any || g != 0.0;
  CHECK(any);
  Tape::current().reset();
}

TEST_CASE("fusion") {
  HiResNet net(NetworkConfig::desk(), 13, DType::F64);
  Rng rng(14);
  const BranchSet in{random_f64({2, 8, 16, 16}, rng), random_f64({2, 16, 8, 8}, rng),
                     random_f64({2, 32, 4, 4}, rng)};
  SUBCASE("shapes") {
    const auto out = net.fuse(2, 0, in, true);
    REQUIRE(out.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out[i].shape() == in[i].shape());
  }
  SUBCASE("zero cross-scale convolutions give each branch back") {
    for (const auto& e : net.params().entries()) {
      const auto& n = e.name;
      if (n.rfind("layer2.m0.fuse.", 0) == 0 && n.find(".conv.") != std::string::npos) fill(e.tensor, 0.0);
    }
    const auto out = net.fuse(2, 0, in, true);
    for (std::size_t i = 0; i < 3; ++i) CHECK(values(out[i]) == values(in[i]));
  }
  SUBCASE("malformed ladder") {
    CHECK_THROWS_AS(net.fuse(2, 0, {in[0], in[1]}, true), ShapeError);
    CHECK_THROWS_AS(net.fuse(2, 0, {in[0], in[2], in[1]}, true), ShapeError);
    CHECK_THROWS(net.fuse(1, 5, in, true));
  }
}

TEST_CASE("refinement head") {
  HiResNet net(NetworkConfig::desk(), 15, DType::F64);
  Rng rng(16);
  const BranchSet b{random_f64({2, 8, 16, 16}, rng), random_f64({2, 16, 8, 8}, rng),
                    random_f64({2, 32, 4, 4}, rng)};
  SUBCASE("affinity rows sum to one") {
    RefineTrace tr;
    const auto out = net.refine(b, true, &tr);
    CHECK(out.coarse.shape() == Shape{2, 4, 64, 64});
    CHECK(out.refined.shape() == Shape{2, 4, 64, 64});
    CHECK(tr.affinity.shape() == Shape{2, 256, 4});
    const auto a = tr.affinity.data();
    for (std::size_t row = 0; row < a.size() / 4; ++row) {
      const double s = a[row * 4] + a[row * 4 + 1] + a[row * 4 + 2] + a[row * 4 + 3];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  SUBCASE("uniform coarse logits give the mean feature for every class") {
    fill(param(net, "head.coarse.conv.weight"), 0.0);
    fill(param(net, "head.coarse.conv.bias"), 0.0);
    RefineTrace tr;
    net.refine(b, true, &tr);
    const auto feat = concat({b[0], bilinear_upsample(b[1], 2), bilinear_upsample(b[2], 4)}, 1);
    const auto c = feat.dim(1);
    REQUIRE(tr.region_features.shape() == Shape{2, 4, c});
    for (std::int64_t n = 0; n < 2; ++n) {
      for (std::int64_t ch = 0; ch < c; ++ch) {
        double m = 0.0;
        for (std::int64_t y = 0; y < 16; ++y) {
          for (std::int64_t x = 0; x < 16; ++x) m += feat.at({n, ch, y, x});
        }
        m /= 256.0;
        for (std::int64_t k = 0; k < 4; ++k) CHECK(tr.region_features.at({n, k, ch}) == doctest::Approx(m).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("forward determinism and inference fusion") {
  Rng rng(17);
  const auto img = random_f64({1, 3, 64, 64}, rng);
  HiResNet a(NetworkConfig::desk(), 5), b(NetworkConfig::desk(), 5);
  const auto img32 = Tensor::from(img.shape(), values(img), DType::F32);
  const auto oa = a.forward(img32, true), ob = b.forward(img32, true);
  CHECK(values(oa.coarse) == values(ob.coarse));
  CHECK(values(oa.refined) == values(ob.refined));

  const SegOutput same{oa.coarse, oa.coarse};
  const auto fused = HiResNet::fuse_prediction(same);
  const auto single = softmax(oa.coarse, 1);
  for (std::size_t i = 0; i < fused.data().size(); ++i) CHECK(fused.data()[i] == doctest::Approx(single.data()[i]).epsilon(1e-6));
}

TEST_CASE("parameter counts") {
  SUBCASE("linear 4 -> 2 with bias") {
    ParamStore s;
    Linear::make(s, "fc", 4, 2);
    CHECK(s.learnable_count() == 10);
  }
  SUBCASE("count ignores input size and BN running statistics") {
    auto c = NetworkConfig::desk();
    const auto base = param_count(c);
    c.input_h = c.input_w = 128;
    CHECK(param_count(c) == base);
    HiResNet net(c, 0);
    std::int64_t all = 0;
    for (const auto& e : net.params().entries()) all += static_cast<std::int64_t>(e.tensor.data().size());
    CHECK(all > base);
  }
  SUBCASE("IA blocks use fewer parameters than basic blocks") {
    for (auto c : {NetworkConfig::desk(), NetworkConfig::full()}) {
      auto basic = c;
      basic.block_kind = BlockKind::Basic;
      CHECK(param_count(c) < param_count(basic));
    }
  }
  SUBCASE("full-size config runs 12 blocks in each of 4 modules per branch") {
    HiResNet net(NetworkConfig::full(), 0);
    for (int m = 0; m < 4; ++m) {
      for (int b = 0; b < 3; ++b) {
        const auto prefix = "layer2.m" + std::to_string(m) + ".b" + std::to_string(b);
        CHECK(net.params().find(prefix + ".blk11.pw.weight") != nullptr);
        CHECK(net.params().find(prefix + ".blk12.pw.weight") == nullptr);
      }
    }
    CHECK(net.params().find("layer2.m4.fuse.o0.i1.up.conv.weight") == nullptr);
    CHECK(net.params().find("layer3.spawn.conv.weight") == nullptr);
  }
}

TEST_CASE("end-to-end gradients under the combined loss") {
  const auto cfg = tiny();
  HiResNet net(cfg, 21, DType::F64);
  Rng rng(22);
  const auto img = random_f64({2, 3, 32, 32}, rng);
  std::vector<std::int32_t> lab(2 * 32 * 32);
  for (std::size_t i = 0; i < lab.size(); ++i) lab[i] = static_cast<std::int32_t>((i / 7 + i / 200) % 3);
  const LabelMap labels(2, 32, 32, lab);
  const LossConfig lc;
  auto loss = [&] {
    Rng r(3);
    return combined_loss(net.forward(img, true), labels, lc, r).total;
  };

  SUBCASE("every parameter has a finite gradient") {
    Tape::current().reset();
    backward(loss());
    int silent = 0, total = 0;
    for (const auto& e : net.params().entries()) {
      if (!e.learnable) {
        CHECK_FALSE(e.tensor.has_grad());
        continue;
      }
      REQUIRE_MESSAGE(e.tensor.has_grad(), e.name);
      double mx = 0.0;
      for (double g : e.tensor.grad()) {
        REQUIRE(std::isfinite(g));
        mx = std::max(mx, std::abs(g));
      }
      // A per-channel constant added after the last fusion is removed by the
      // training-mode BN at the head input, so those biases get no gradient.
      if (mx < 1e-12) ++silent;
      ++total;
    }
    CHECK(silent * 5 < total);
    Tape::current().reset();
    net.params().zero_grad();
  }
  SUBCASE("finite differences") {
    std::vector<std::string> names;
    for (const auto& e : net.params().entries()) {
      if (e.learnable) names.push_back(e.name);
    }
    GradCheckOptions opt;
    opt.max_entries = 3;
    opt.seed = 5;
    const auto r = check_gradients(loss, net.params().learnable(), names, opt);
    CHECK_MESSAGE(r.max_rel_error < 1e-3, r.worst_input);
  }
}
