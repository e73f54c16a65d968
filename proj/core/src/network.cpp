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

#include "hires/network.hpp"

#include <cmath>
#include <sstream>

namespace hires {

NetworkConfig NetworkConfig::desk() { return NetworkConfig{}; }

NetworkConfig NetworkConfig::full() {
  NetworkConfig c;
  c.channels = {48, 96, 192};
  c.blocks = {4, 4, 12};
  c.modules = {1, 4};
  c.window = 7;
  c.input_h = 224;
  c.input_w = 224;
  return c;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("NetworkConfig: " + msg); };
  for (int c : channels) {
    if (c < 1) fail("channels must be positive");
    if (block_kind == BlockKind::InformationAggregation && (se_ratio < 1 || c % se_ratio != 0)) {
      fail("channel count " + std::to_string(c) + " not divisible by se_ratio " +
           std::to_string(se_ratio));
    }
  }
  for (int b : blocks) {
    if (b < 0) fail("block counts must be non-negative");
  }
  for (int m : modules) {
    if (m < 0) fail("module counts must be non-negative");
  }
  if (window < 1 || heads < 1 || head_dim < 1) fail("window, heads and head_dim must be >= 1");
  if (dw_kernel < 1 || dw_kernel % 2 == 0) fail("dw_kernel must be odd");
  if (num_classes < 2) fail("num_classes must be >= 2");
  const int unit = 16 * window;
  if (input_h < unit || input_w < unit || input_h % unit != 0 || input_w % unit != 0) {
    fail("input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
         " must be divisible by 16*window = " + std::to_string(unit));
  }
  if (ocr_dim < 0) fail("ocr_dim must be >= 0");
  if (!(bn_eps > 0.0)) fail("bn_eps must be positive");
}

int NetworkConfig::effective_ocr_dim() const {
  if (ocr_dim > 0) return ocr_dim;
  return std::max(1, (channels[0] + channels[1] + channels[2]) / 2);
}

IAOptions NetworkConfig::ia_options() const {
  IAOptions o;
  o.window = {window, heads, head_dim};
  o.dw_kernel = dw_kernel;
  o.se_ratio = se_ratio;
  o.order = activation_order;
  return o;
}

namespace {

template <std::size_t N>
std::string join(const std::array<int, N>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < N; ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

template <std::size_t N>
std::array<int, N> split_ints(const std::string& key, const std::string& value) {
  std::array<int, N> out{};
  std::stringstream ss(value);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= N) break;
    out[i++] = std::stoi(item);
  }
  if (i != N || std::getline(ss, item, ',')) {
    throw std::invalid_argument("config key '" + key + "' expects " + std::to_string(N) +
                                " comma-separated integers");
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> NetworkConfig::to_kv() const {
  return {
      {"channels", join(channels)},
      {"blocks", join(blocks)},
      {"modules", join(modules)},
      {"window", std::to_string(window)},
      {"heads", std::to_string(heads)},
      {"head_dim", std::to_string(head_dim)},
      {"dw_kernel", std::to_string(dw_kernel)},
      {"se_ratio", std::to_string(se_ratio)},
      {"num_classes", std::to_string(num_classes)},
      {"input_h", std::to_string(input_h)},
      {"input_w", std::to_string(input_w)},
      {"ocr_dim", std::to_string(ocr_dim)},
      {"block_kind", block_kind == BlockKind::Basic ? "basic" : "ia"},
      {"activation_order",
       activation_order == ActivationOrder::GeluThenSilu ? "gelu_silu" : "silu_gelu"},
      {"bn_eps", fmt_double(bn_eps)},
      {"bn_momentum", fmt_double(bn_momentum)},
  };
}

void NetworkConfig::apply_kv(const std::string& key, const std::string& value) {
  if (key == "channels") {
    channels = split_ints<3>(key, value);
  } else if (key == "blocks") {
    blocks = split_ints<3>(key, value);
  } else if (key == "modules") {
    modules = split_ints<2>(key, value);
  } else if (key == "window") {
    window = std::stoi(value);
  } else if (key == "heads") {
    heads = std::stoi(value);
  } else if (key == "head_dim") {
    head_dim = std::stoi(value);
  } else if (key == "dw_kernel") {
    dw_kernel = std::stoi(value);
  } else if (key == "se_ratio") {
    se_ratio = std::stoi(value);
  } else if (key == "num_classes") {
    num_classes = std::stoi(value);
  } else if (key == "input_h") {
    input_h = std::stoi(value);
  } else if (key == "input_w") {
    input_w = std::stoi(value);
  } else if (key == "ocr_dim") {
    ocr_dim = std::stoi(value);
  } else if (key == "block_kind") {
    if (value == "ia") {
      block_kind = BlockKind::InformationAggregation;
    } else if (value == "basic") {
      block_kind = BlockKind::Basic;
    } else {
      throw std::invalid_argument("block_kind must be 'ia' or 'basic'");
    }
  } else if (key == "activation_order") {
    if (value == "gelu_silu") {
      activation_order = ActivationOrder::GeluThenSilu;
    } else if (value == "silu_gelu") {
      activation_order = ActivationOrder::SiluThenGelu;
    } else {
      throw std::invalid_argument("activation_order must be 'gelu_silu' or 'silu_gelu'");
    }
  } else if (key == "bn_eps") {
    bn_eps = std::stod(value);
  } else if (key == "bn_momentum") {
    bn_momentum = std::stod(value);
  } else {
    throw std::invalid_argument("unknown network config key: " + key);
  }
}

// ---------------------------------------------------------------------------

namespace {

using Block = std::variant<InformationAggregation, BasicBlock>;

Tensor run_block(Block& block, const Tensor& x, bool training) {
  return std::visit([&](auto& b) { return b.forward(x, training); }, block);
}

struct NormConv {
  BatchNorm bn;
  Conv conv;
  Tensor operator()(const Tensor& x, bool training) { return conv(bn(x, training)); }
};

// One input-to-output path of the fusion layer.
struct Resample {
  int up_scale = 1;              // > 1 for the upsample path
  std::vector<NormConv> steps;   // empty for the identity path
};

struct FuseLayer {
  std::vector<std::vector<Resample>> paths;  // [out][in]
};

struct HRModule {
  std::vector<std::vector<Block>> blocks;  // [branch][block]
  FuseLayer fuse;
};

}  // namespace

struct HiResNet::Impl {
  NormConv stem1, stem2;
  std::vector<InvertedBottleneck> stem_blocks;
  NormConv spawn1, spawn2;
  std::vector<HRModule> layer1, layer2;
  NormConv coarse, phi, psi, delta, refined;
};

namespace {

class Builder {
 public:
  Builder(ParamStore& store, const NetworkConfig& config) : store_(store), config_(config) {}

  NormConv norm_conv(const std::string& name, std::int64_t in, std::int64_t out, std::int64_t k,
                     std::int64_t stride) {
    NormConv nc;
    nc.bn = BatchNorm::make(store_, name + ".bn", in);
    nc.bn.eps = config_.bn_eps;
    nc.bn.momentum = config_.bn_momentum;
    nc.conv = Conv::make(store_, name + ".conv", in, out, k, stride);
    return nc;
  }

  HRModule module(const std::string& name, int branches, int blocks_per_branch) {
    HRModule m;
    const auto opts = config_.ia_options();
    m.blocks.resize(static_cast<std::size_t>(branches));
    for (int b = 0; b < branches; ++b) {
      const auto c = config_.channels[static_cast<std::size_t>(b)];
      for (int i = 0; i < blocks_per_branch; ++i) {
        const auto bname = name + ".b" + std::to_string(b) + ".blk" + std::to_string(i);
        if (config_.block_kind == BlockKind::InformationAggregation) {
          m.blocks[b].emplace_back(std::in_place_type<InformationAggregation>, store_, bname, c,
                                   opts);
        } else {
          m.blocks[b].emplace_back(std::in_place_type<BasicBlock>, store_, bname, c);
        }
      }
    }
    m.fuse = fuse(name + ".fuse", branches);
    return m;
  }

  FuseLayer fuse(const std::string& name, int branches) {
    FuseLayer f;
    f.paths.resize(static_cast<std::size_t>(branches));
    for (int o = 0; o < branches; ++o) {
      for (int i = 0; i < branches; ++i) {
        Resample r;
        const auto pname = name + ".o" + std::to_string(o) + ".i" + std::to_string(i);
        const auto cin = config_.channels[static_cast<std::size_t>(i)];
        const auto cout = config_.channels[static_cast<std::size_t>(o)];
        if (i > o) {
          r.up_scale = 1 << (i - o);
          r.steps.push_back(norm_conv(pname + ".up", cin, cout, 1, 1));
        } else if (i < o) {
          for (int s = 0; s < o - i; ++s) {
            const bool last = s == o - i - 1;
            r.steps.push_back(
                norm_conv(pname + ".down" + std::to_string(s), cin, last ? cout : cin, 3, 2));
          }
        }
        f.paths[o].push_back(std::move(r));
      }
    }
    return f;
  }

 private:
  ParamStore& store_;
  const NetworkConfig& config_;
};

Tensor apply_path(Resample& path, const Tensor& x, bool training) {
  if (path.steps.empty()) return x;
  if (path.up_scale > 1) return path.steps[0](bilinear_upsample(x, path.up_scale), training);
  Tensor h = x;
  for (std::size_t s = 0; s < path.steps.size(); ++s) {
    if (s > 0) h = gelu(h);
    h = path.steps[s](h, training);
  }
  return h;
}

BranchSet run_fuse(FuseLayer& f, const BranchSet& in, bool training) {
  if (in.size() != f.paths.size()) {
    throw ShapeError("fuse: expected " + std::to_string(f.paths.size()) + " branches, got " +
                     std::to_string(in.size()));
  }
  BranchSet out;
  for (std::size_t o = 0; o < f.paths.size(); ++o) {
    Tensor acc;
    for (std::size_t i = 0; i < in.size(); ++i) {
      auto t = apply_path(f.paths[o][i], in[i], training);
      if (t.shape() != in[o].shape()) {
        throw ShapeError("fuse: malformed branch ladder, " + shape_str(t.shape()) + " vs " +
                         shape_str(in[o].shape()));
      }
      acc = acc.defined() ? add(acc, t) : t;
    }
    out.push_back(acc);
  }
  return out;
}

}  // namespace

HiResNet::HiResNet(const NetworkConfig& config, std::uint64_t seed, DType dtype)
    : config_(config), store_(dtype, seed), impl_(std::make_unique<Impl>()) {
  config_.validate();
  Builder b(store_, config_);
  const auto [c1, c2, c3] = config_.channels;
  impl_->stem1 = b.norm_conv("funnel.stem1", 3, c1, 3, 2);
  impl_->stem2 = b.norm_conv("funnel.stem2", c1, c1, 3, 2);
  for (int i = 0; i < config_.blocks[0]; ++i) {
    impl_->stem_blocks.emplace_back(store_, "funnel.ib" + std::to_string(i), c1);
  }
  impl_->spawn1 = b.norm_conv("layer1.spawn", c1, c2, 3, 2);
  for (int m = 0; m < config_.modules[0]; ++m) {
    impl_->layer1.push_back(b.module("layer1.m" + std::to_string(m), 2, config_.blocks[1]));
  }
  impl_->spawn2 = b.norm_conv("layer2.spawn", c2, c3, 3, 2);
  for (int m = 0; m < config_.modules[1]; ++m) {
    impl_->layer2.push_back(b.module("layer2.m" + std::to_string(m), 3, config_.blocks[2]));
  }
  const std::int64_t total = c1 + c2 + c3;
  const std::int64_t d = config_.effective_ocr_dim();
  const std::int64_t k = config_.num_classes;
  impl_->coarse = b.norm_conv("head.coarse", total, k, 1, 1);
  impl_->phi = b.norm_conv("head.ocr.phi", total, d, 1, 1);
  impl_->psi = b.norm_conv("head.ocr.psi", total, d, 1, 1);
  impl_->delta = b.norm_conv("head.ocr.delta", total, d, 1, 1);
  impl_->refined = b.norm_conv("head.refined", d + total, k, 1, 1);
}

HiResNet::~HiResNet() = default;

Tensor HiResNet::funnel_forward(const Tensor& image, bool training) {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("funnel: expected [N,3,H,W], got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 4 != 0 || image.dim(3) % 4 != 0) {
    throw ShapeError("funnel: input " + shape_str(image.shape()) + " not divisible by 4");
  }
  auto h = gelu(impl_->stem1(image, training));
  h = gelu(impl_->stem2(h, training));
  for (auto& blk : impl_->stem_blocks) h = blk.forward(h, training);
  return h;
}

Tensor HiResNet::new_branch(int layer, const Tensor& x, bool training) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ShapeError("new_branch: spatial dims of " + shape_str(x.shape()) + " must be even");
  }
  auto& spawn = layer == 1 ? impl_->spawn1 : impl_->spawn2;
  if (layer != 1 && layer != 2) throw std::invalid_argument("new_branch: layer must be 1 or 2");
  return spawn(x, training);
}

BranchSet HiResNet::fuse(int layer, int module, const BranchSet& branches, bool training) {
  auto& modules = layer == 1 ? impl_->layer1 : impl_->layer2;
  if ((layer != 1 && layer != 2) || module < 0 || module >= static_cast<int>(modules.size())) {
    throw std::invalid_argument("fuse: no module " + std::to_string(module) + " in layer " +
                                std::to_string(layer));
  }
  return run_fuse(modules[static_cast<std::size_t>(module)].fuse, branches, training);
}

BranchSet HiResNet::multi_branch_forward(const Tensor& x, bool training) {
  if (x.rank() != 4 || x.dim(1) != config_.channels[0]) {
    throw ShapeError("multi_branch: expected C1 = " + std::to_string(config_.channels[0]) +
                     " input, got " + shape_str(x.shape()));
  }
  const std::int64_t unit = 4LL * config_.window;
  if (x.dim(2) % unit != 0 || x.dim(3) % unit != 0) {
    throw ShapeError("multi_branch: input " + shape_str(x.shape()) +
                     " does not window evenly at 1/16 resolution");
  }
  auto run_layer = [training](std::vector<HRModule>& modules, BranchSet branches) {
    for (auto& m : modules) {
      for (std::size_t b = 0; b < branches.size(); ++b) {
        for (auto& blk : m.blocks[b]) branches[b] = run_block(blk, branches[b], training);
      }
      branches = run_fuse(m.fuse, branches, training);
    }
    return branches;
  };
  BranchSet branches{x};
  branches.push_back(new_branch(1, branches.back(), training));
  branches = run_layer(impl_->layer1, std::move(branches));
  branches.push_back(new_branch(2, branches.back(), training));
  return run_layer(impl_->layer2, std::move(branches));
}

SegOutput HiResNet::refine(const BranchSet& branches, bool training, RefineTrace* trace) {
  if (branches.size() != 3) throw ShapeError("refine: expected three branches");
  const auto n = branches[0].dim(0);
  const auto h = branches[0].dim(2), w = branches[0].dim(3);
  const auto feat = concat({branches[0], bilinear_upsample(branches[1], 2),
                            bilinear_upsample(branches[2], 4)},
                           1);
  const auto total = feat.dim(1);
  const auto pixels = h * w;
  const std::int64_t k = config_.num_classes;
  const std::int64_t d = config_.effective_ocr_dim();

  const auto coarse = impl_->coarse(feat, training);
  if (coarse.dim(1) != k) throw ShapeError("refine: class count mismatch");

  // Soft region features: spatial softmax of each class map weights the pixels.
  const auto region_weights = softmax(reshape(coarse, {n, k, pixels}), 2);
  const auto pixel_feats = reshape(feat, {n, total, pixels});
  const auto regions = bmm(region_weights, transpose(pixel_feats, 1, 2));  // [N,K,Ctot]

  const auto region_img = reshape(transpose(regions, 1, 2), {n, total, k, 1});
  const auto query = transpose(reshape(gelu(impl_->phi(feat, training)), {n, d, pixels}), 1, 2);
  const auto key = reshape(gelu(impl_->psi(region_img, training)), {n, d, k});
  const auto value = transpose(reshape(gelu(impl_->delta(region_img, training)), {n, d, k}), 1, 2);

  const auto affinity =
      softmax(scalar_mul(bmm(query, key), 1.0 / std::sqrt(static_cast<double>(d))), 2);  // [N,P,K]
  const auto context = reshape(transpose(bmm(affinity, value), 1, 2), {n, d, h, w});
  const auto refined = impl_->refined(concat({context, feat}, 1), training);

  if (trace != nullptr) {
    trace->coarse_low = coarse;
    trace->region_features = regions;
    trace->affinity = affinity;
  }
  return {bilinear_upsample(coarse, 4), bilinear_upsample(refined, 4)};
}

SegOutput HiResNet::forward(const Tensor& image, bool training) {
  const std::int64_t unit = 16LL * config_.window;
  if (image.rank() != 4 || image.dim(2) % unit != 0 || image.dim(3) % unit != 0) {
    throw ShapeError("network: input " + shape_str(image.shape()) +
                     " must have H, W divisible by " + std::to_string(unit));
  }
  return refine(multi_branch_forward(funnel_forward(image, training), training), training);
}

Tensor HiResNet::fuse_prediction(const SegOutput& out) {
  return add(scalar_mul(softmax(out.coarse, 1), 0.5), scalar_mul(softmax(out.refined, 1), 0.5));
}

std::int64_t param_count(const NetworkConfig& config) {
  HiResNet net(config, 0);
  return net.params().learnable_count();
}

}  // namespace hires
