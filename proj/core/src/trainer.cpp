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

#include "hires/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace hires {
namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config key '" + key + "' expects true/false");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Split N items into batches of at most `size`, in order.
std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order, int size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(size)) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(size))));
  }
  return out;
}

double mixed(const LossConfig& c, double coarse, double refined) {
  return c.coarse_ratio * coarse + c.refined_ratio * refined;
}

constexpr std::uint64_t kValSeedOffset = 0x5eed0001;
constexpr std::uint64_t kEvalLossSeed = 0x5eed0002;

}  // namespace

std::map<std::string, std::string> TrainConfig::to_kv() const {
  auto kv = net.to_kv();
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["lr"] = fmt17(lr);
  kv["weight_decay"] = fmt17(weight_decay);
  kv["warmup_epochs"] = std::to_string(warmup_epochs);
  kv["data_seed"] = std::to_string(data_seed);
  kv["model_seed"] = std::to_string(model_seed);
  kv["train_count"] = std::to_string(train_count);
  kv["val_count"] = std::to_string(val_count);
  kv["road_grid"] = std::to_string(road_grid);
  kv["augment"] = augment ? "true" : "false";
  kv["validate_each_epoch"] = validate_each_epoch ? "true" : "false";
  kv["alpha"] = fmt17(loss.alpha);
  kv["beta_w"] = fmt17(loss.beta_w);
  kv["gamma"] = fmt17(loss.gamma);
  kv["coarse_ratio"] = fmt17(loss.coarse_ratio);
  kv["refined_ratio"] = fmt17(loss.refined_ratio);
  kv["epsilon"] = fmt17(loss.epsilon);
  kv["hd_beta"] = fmt17(loss.hd_beta);
  kv["dt_cap"] = std::to_string(loss.dt_cap);
  kv["cea_exclude_background"] = loss.cea_exclude_background ? "true" : "false";
  return kv;
}

void TrainConfig::apply_kv(const std::string& key, const std::string& value) {
  if (key == "epochs") epochs = std::stoi(value);
  else if (key == "batch_size") batch_size = std::stoi(value);
  else if (key == "lr") lr = std::stod(value);
  else if (key == "weight_decay") weight_decay = std::stod(value);
  else if (key == "warmup_epochs") warmup_epochs = std::stoi(value);
  else if (key == "data_seed") data_seed = std::stoull(value);
  else if (key == "model_seed") model_seed = std::stoull(value);
  else if (key == "train_count") train_count = std::stoi(value);
  else if (key == "val_count") val_count = std::stoi(value);
  else if (key == "road_grid") road_grid = std::stoi(value);
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "validate_each_epoch") validate_each_epoch = parse_bool(key, value);
  else if (key == "alpha") loss.alpha = std::stod(value);
  else if (key == "beta_w") loss.beta_w = std::stod(value);
  else if (key == "gamma") loss.gamma = std::stod(value);
  else if (key == "coarse_ratio") loss.coarse_ratio = std::stod(value);
  else if (key == "refined_ratio") loss.refined_ratio = std::stod(value);
  else if (key == "epsilon") loss.epsilon = std::stod(value);
  else if (key == "hd_beta") loss.hd_beta = std::stod(value);
  else if (key == "dt_cap") loss.dt_cap = std::stoi(value);
  else if (key == "cea_exclude_background") loss.cea_exclude_background = parse_bool(key, value);
  else net.apply_kv(key, value);
}

void TrainConfig::validate() const {
  net.validate();
  loss.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (lr < 0) throw std::invalid_argument("lr must be >= 0");
  if (train_count < 1 || val_count < 1) throw std::invalid_argument("train_count and val_count must be >= 1");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key=value");
    }
    base.apply_kv(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

SynthSpec train_spec(const TrainConfig& config) {
  SynthSpec s;
  s.seed = config.data_seed;
  s.count = config.train_count;
  s.height = config.net.input_h;
  s.width = config.net.input_w;
  s.num_classes = config.net.num_classes;
  s.road_grid = config.road_grid;
  return s;
}

SynthSpec val_spec(const TrainConfig& config) {
  auto s = train_spec(config);
  s.seed = config.data_seed + kValSeedOffset;
  s.count = config.val_count;
  return s;
}

std::string tsv_header() {
  return "step\tlr\tloss_total\tloss_gd\tloss_lsce\tloss_cea\tsplit\tmiou\tmean_f1\toa";
}

std::string tsv_row(const LogRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? fmt9(*v) : std::string("-"); };
  return std::to_string(r.step) + "\t" + fmt9(r.lr) + "\t" + fmt9(r.loss_total) + "\t" + fmt9(r.loss_gd) +
         "\t" + fmt9(r.loss_lsce) + "\t" + fmt9(r.loss_cea) + "\t" + r.split + "\t" + opt(r.miou) + "\t" +
         opt(r.mean_f1) + "\t" + opt(r.oa);
}

LogRow parse_tsv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, '\t')) f.push_back(item);
  if (f.size() != 10) throw std::invalid_argument("tsv row: expected 10 fields");
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s == "-") return std::nullopt;
    return std::stod(s);
  };
  LogRow r;
  r.step = std::stoll(f[0]);
  r.lr = std::stod(f[1]);
  r.loss_total = std::stod(f[2]);
  r.loss_gd = std::stod(f[3]);
  r.loss_lsce = std::stod(f[4]);
  r.loss_cea = std::stod(f[5]);
  r.split = f[6];
  r.miou = opt(f[7]);
  r.mean_f1 = opt(f[8]);
  r.oa = opt(f[9]);
  return r;
}

EvalResult evaluate(HiResNet& net, const Dataset& data, const LossConfig& loss, int batch_size) {
  NoGradGuard guard;
  EvalResult res;
  res.confusion = ConfusionMatrix(data.num_classes);
  Rng loss_rng(kEvalLossSeed);
  std::vector<std::size_t> order(data.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double total = 0.0;
  LossTerms coarse, refined;
  const auto batches = batches_of(order, batch_size);
  for (const auto& idx : batches) {
    const auto batch = make_batch(data, idx, net.params().dtype());
    const auto out = net.forward(batch.images, false);
    const auto l = combined_loss(out, batch.labels, loss, loss_rng);
    const double w = static_cast<double>(idx.size()) / static_cast<double>(order.size());
    total += w * l.total.item();
    coarse.gd += w * l.coarse.gd;
    coarse.lsce += w * l.coarse.lsce;
    coarse.cea += w * l.coarse.cea;
    refined.gd += w * l.refined.gd;
    refined.lsce += w * l.refined.lsce;
    refined.cea += w * l.refined.cea;
    const auto pred = argmax_labels(HiResNet::fuse_prediction(out));
    update_confusion(res.confusion, pred, batch.labels.values);
    res.predictions.insert(res.predictions.end(), pred.begin(), pred.end());
  }
  res.metrics = metrics(res.confusion);
  res.coarse = coarse;
  res.refined = refined;
  res.loss_total = total;
  return res;
}

namespace {

LogRow val_row(const EvalResult& e, const LossConfig& c, std::int64_t step, double lr) {
  LogRow r;
  r.step = step;
  r.lr = lr;
  r.loss_total = e.loss_total;
  r.loss_gd = mixed(c, e.coarse.gd, e.refined.gd);
  r.loss_lsce = mixed(c, e.coarse.lsce, e.refined.lsce);
  r.loss_cea = mixed(c, e.coarse.cea, e.refined.cea);
  r.split = "val";
  r.miou = e.metrics.miou;
  r.mean_f1 = e.metrics.mean_f1;
  r.oa = e.metrics.oa;
  return r;
}

}  // namespace

TrainResult train(HiResNet& net, OptimState& opt, const TrainConfig& config, std::ostream* log) {
  config.validate();
  const auto train_set = synth_dataset(train_spec(config));
  const auto val_set = synth_dataset(val_spec(config));
  const auto dtype = net.params().dtype();

  Schedule schedule;
  schedule.base_lr = config.lr;
  schedule.total_epochs = config.epochs;
  schedule.warmup_epochs = std::clamp(config.warmup_epochs, 0, std::max(0, config.epochs - 1));
  schedule.steps_per_epoch = (config.train_count + config.batch_size - 1) / config.batch_size;
  schedule.validate();
  opt.weight_decay = config.weight_decay;

  Rng data_rng(config.data_seed * 2654435761u + 1);
  Rng loss_rng(config.model_seed * 2654435761u + 2);
  const auto params = net.params().learnable();
  auto& tape = Tape::current();
  TrainResult result;
  if (log != nullptr) *log << tsv_header() << "\n";
  auto emit = [&](const LogRow& r) {
    result.log.push_back(r);
    if (log != nullptr) *log << tsv_row(r) << "\n" << std::flush;
  };

  std::int64_t step = opt.step;
  bool first = true;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(data_rng.below(static_cast<std::int64_t>(i)))]);
    }
    for (const auto& idx : batches_of(order, config.batch_size)) {
      Dataset view{train_set.height, train_set.width, train_set.num_classes, {}, {}};
      for (auto i : idx) {
        const auto& s = train_set.samples[i];
        view.samples.push_back(config.augment ? augment(s, train_set.height, train_set.width, data_rng) : s);
      }
      std::vector<std::size_t> all(view.samples.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto batch = make_batch(view, all, dtype);

      tape.reset();
      const auto out = net.forward(batch.images, true);
      const auto loss = combined_loss(out, batch.labels, config.loss, loss_rng);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        throw NumericalError("train: non-finite loss at step " + std::to_string(step));
      }
      backward(loss.total);
      tape.reset();
      opt.lr = lr_at(schedule, step);
      adamw_step(params, opt);
      net.params().zero_grad();

      LogRow r;
      r.step = step;
      r.lr = opt.lr;
      r.loss_total = value;
      r.loss_gd = mixed(config.loss, loss.coarse.gd, loss.refined.gd);
      r.loss_lsce = mixed(config.loss, loss.coarse.lsce, loss.refined.lsce);
      r.loss_cea = mixed(config.loss, loss.coarse.cea, loss.refined.cea);
      r.split = "train";
      emit(r);
      if (first) result.first_loss = value;
      first = false;
      result.last_loss = value;
      ++step;
    }
    if (config.validate_each_epoch || epoch + 1 == config.epochs) {
      auto e = evaluate(net, val_set, config.loss, config.batch_size);
      emit(val_row(e, config.loss, step, opt.lr));
      result.last_val = std::move(e);
    }
  }
  return result;
}

EvalResult evaluate_train_set(HiResNet& net, const TrainConfig& config) {
  return evaluate(net, synth_dataset(train_spec(config)), config.loss, config.batch_size);
}

std::vector<std::pair<std::string, std::string>> checkpoint_meta(const TrainConfig& config,
                                                                 const std::string& kind,
                                                                 std::int64_t step) {
  std::vector<std::pair<std::string, std::string>> meta;
  meta.emplace_back("kind", kind);
  meta.emplace_back("step", std::to_string(step));
  for (const auto& [k, v] : config.to_kv()) meta.emplace_back("config." + k, v);
  return meta;
}

TrainConfig config_from_meta(const Checkpoint& ckpt) {
  TrainConfig c;
  const std::string prefix = "config.";
  for (const auto& [k, v] : ckpt.meta) {
    if (k.rfind(prefix, 0) == 0) c.apply_kv(k.substr(prefix.size()), v);
  }
  return c;
}

double cluster_separation(ToyEncoder& encoder, const ClusterSet& set) {
  NoGradGuard guard;
  const auto f = l2_normalize(encoder.forward(set.images, false));
  const auto n = f.dim(0), d = f.dim(1);
  const auto v = f.data();
  double intra = 0.0, inter = 0.0;
  std::int64_t n_intra = 0, n_inter = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      double dot = 0.0;
      for (std::int64_t k = 0; k < d; ++k) dot += v[static_cast<std::size_t>(i * d + k)] * v[static_cast<std::size_t>(j * d + k)];
      if (set.cluster[static_cast<std::size_t>(i)] == set.cluster[static_cast<std::size_t>(j)]) {
        intra += dot;
        ++n_intra;
      } else {
        inter += dot;
        ++n_inter;
      }
    }
  }
  return intra / static_cast<double>(std::max<std::int64_t>(n_intra, 1)) -
         inter / static_cast<double>(std::max<std::int64_t>(n_inter, 1));
}

PretrainResult pretrain(ToyEncoder& query, const PretrainConfig& config, std::ostream* log) {
  const auto set = two_cluster_images(config.image_count, config.image_size, config.data_seed);
  ToyEncoder key(config.channels, config.ib_blocks, config.feature_dim, config.model_seed,
                 query.params().dtype());
  init_key_encoder(key, query);
  Rng rng(config.data_seed * 2654435761u + 3);
  auto state = MoCoState::create(config.moco, query.feature_dim(), rng);
  PretrainResult result;
  if (log != nullptr) *log << "step\tloss\n";
  const auto n = set.images.dim(0);
  const Shape one{set.images.dim(1), set.images.dim(2), set.images.dim(3)};
  const auto per = numel_of(one);
  for (int s = 0; s < config.steps; ++s) {
    std::vector<double> pick;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto i = rng.below(n);
      const auto first = set.images.data().begin() + i * per;
      pick.insert(pick.end(), first, first + per);
    }
    const auto batch = Tensor::from({config.batch_size, one[0], one[1], one[2]}, std::move(pick),
                                    set.images.dtype());
    const auto r = moco_step(state, query, key, batch, rng);
    if (!std::isfinite(r.loss)) throw NumericalError("pretrain: non-finite loss at step " + std::to_string(s));
    result.losses.push_back(r.loss);
    if (log != nullptr) *log << s << "\t" << fmt9(r.loss) << "\n";
  }
  result.separation = cluster_separation(query, set);
  return result;
}

}  // namespace hires
