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

#include "hires/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace hires {
namespace {

constexpr char kMagic[] = "HIRES1";
constexpr std::size_t kMagicLen = 6;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void str(const std::string& s) {
    u32(checked(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  void raw(const char* p, std::size_t n) { buf_.insert(buf_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return buf_; }

  static std::uint32_t checked(std::size_t n) {
    if (n > std::numeric_limits<std::uint32_t>::max()) throw CheckpointError("checkpoint: field too large");
    return static_cast<std::uint32_t>(n);
  }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : buf_(std::move(bytes)) {}
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  std::vector<char> buf_;
  std::size_t pos_ = 0;
};

NamedTensor named(const std::string& name, const Tensor& t) {
  NamedTensor nt{name, t.shape(), {}};
  nt.values.reserve(static_cast<std::size_t>(t.numel()));
  for (double v : t.data()) nt.values.push_back(static_cast<float>(v));
  return nt;
}

void check_shape(const NamedTensor& src, const Tensor& dst) {
  if (src.shape != dst.shape()) {
    throw CheckpointError("checkpoint: shape mismatch for tensor '" + src.name + "': file has " +
                          shape_str(src.shape) + ", model expects " + shape_str(dst.shape()));
  }
}

void copy_into(const NamedTensor& src, Tensor dst) {
  check_shape(src, dst);
  auto out = dst.mutable_data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(src.values[i]);
}

}  // namespace

const std::string* Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return &v;
  }
  return nullptr;
}

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic, kMagicLen);
  w.u32(Writer::checked(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(Writer::checked(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != numel_of(t.shape)) {
      throw CheckpointError("checkpoint: tensor '" + t.name + "' payload does not match its shape");
    }
    w.str(t.name);
    w.u32(Writer::checked(t.shape.size()));
    for (auto d : t.shape) w.u32(Writer::checked(static_cast<std::size_t>(d)));
    for (float f : t.values) w.f32(f);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("checkpoint: cannot open " + path.string() + " for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  if (r.raw(kMagicLen) != std::string(kMagic, kMagicLen)) {
    throw CheckpointError("checkpoint: bad magic in " + path.string());
  }
  Checkpoint ckpt;
  const auto meta_count = r.u32();
  for (std::uint32_t i = 0; i < meta_count; ++i) {
    auto k = r.str();
    auto v = r.str();
    ckpt.meta.emplace_back(std::move(k), std::move(v));
  }
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rank = r.u32();
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.u32();
      t.shape.push_back(e);
      n *= e;
    }
    r.need(4 * n);
    t.values.resize(n);
    for (auto& f : t.values) f = r.f32();
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes in " + path.string());
  return ckpt;
}

Checkpoint snapshot(const ParamStore& store, const OptimState* opt,
                    std::vector<std::pair<std::string, std::string>> meta) {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  for (const auto& e : store.entries()) ckpt.tensors.push_back(named(e.name, e.tensor));
  if (opt != nullptr && !opt->m.empty()) {
    ckpt.meta.emplace_back("opt.step", std::to_string(opt->step));
    std::size_t i = 0;
    for (const auto& e : store.entries()) {
      if (!e.learnable) continue;
      ckpt.tensors.push_back(named("opt.m." + e.name, opt->m.at(i)));
      ckpt.tensors.push_back(named("opt.v." + e.name, opt->v.at(i)));
      ++i;
    }
  }
  return ckpt;
}

void restore(const Checkpoint& ckpt, ParamStore& store, OptimState* opt, bool allow_missing) {
  for (const auto& e : store.entries()) {
    const auto* t = ckpt.find(e.name);
    if (t == nullptr) {
      if (allow_missing) continue;
      throw CheckpointError("checkpoint: missing tensor '" + e.name + "'");
    }
    check_shape(*t, e.tensor);
  }
  // Validated up front so a bad file leaves the store untouched.
  for (const auto& e : store.entries()) {
    if (const auto* t = ckpt.find(e.name)) copy_into(*t, e.tensor);
  }
  if (opt == nullptr) return;
  const auto* step = ckpt.meta_value("opt.step");
  opt->m.clear();
  opt->v.clear();
  opt->step = 0;
  if (step == nullptr) return;
  opt->step = std::stoll(*step);
  for (const auto& e : store.entries()) {
    if (!e.learnable) continue;
    const auto* m = ckpt.find("opt.m." + e.name);
    const auto* v = ckpt.find("opt.v." + e.name);
    if (m == nullptr || v == nullptr) throw CheckpointError("checkpoint: missing optimizer state for '" + e.name + "'");
    opt->m.push_back(Tensor::zeros(e.tensor.shape(), e.tensor.dtype()));
    opt->v.push_back(Tensor::zeros(e.tensor.shape(), e.tensor.dtype()));
    copy_into(*m, opt->m.back());
    copy_into(*v, opt->v.back());
  }
}

}  // namespace hires
