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

#include "hires/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

#include "hires/checkpoint.hpp"
#include "hires/distance_transform.hpp"
#include "hires/gradcheck.hpp"
#include "hires/trainer.hpp"

namespace hires {
namespace {

std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Tensor random_leaf(Shape shape, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), DType::F64).set_requires_grad(true);
}

bool is_buffer(const std::string& name) {
  auto ends = [&](const std::string& s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends(".running_mean") || ends(".running_var");
}

void write_pgm(const std::filesystem::path& path, int h, int w, const std::int32_t* labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  for (int i = 0; i < h * w; ++i) out.put(static_cast<char>(labels[i]));
}

}  // namespace

bool run_selftest(std::ostream& out) {
  bool ok = true;
  auto report = [&](const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "ok    " : "FAIL  ") << name << "  " << detail << "\n";
    ok = ok && pass;
  };
  Rng rng(2024);
  auto grad_case = [&](const std::string& name, std::vector<Tensor> in, const std::function<Tensor()>& f,
                       double tol) {
    const auto r = check_gradients(f, in);
    report("grad " + name, r.max_rel_error < tol, "max rel err " + fmt9(r.max_rel_error));
  };

  {
    auto a = random_leaf({3, 4}, rng), b = random_leaf({4, 2}, rng);
    grad_case("matmul", {a, b}, [&] { return sum(square(matmul(a, b))); }, 1e-6);
  }
  {
    auto x = random_leaf({2, 5}, rng);
    grad_case("gelu/silu/sigmoid", {x}, [&] { return sum(mul(gelu(x), add(silu(x), sigmoid(x)))); }, 1e-6);
  }
  {
    auto x = random_leaf({1, 4, 6, 6}, rng), w = random_leaf({4, 1, 3, 3}, rng), bias = random_leaf({4}, rng);
    ConvSpec s{4, 3, 3, 1, 1, 1, 1, 4};
    grad_case("depthwise conv2d", {x, w, bias}, [&] { return sum(square(conv2d(x, w, bias, s))); }, 1e-5);
  }
  {
    auto x = random_leaf({2, 3, 4, 4}, rng), g = random_leaf({3}, rng), b = random_leaf({3}, rng);
    BatchNormState st{Tensor::zeros({3}, DType::F64), Tensor::full({3}, 1.0, DType::F64)};
    auto target = random_leaf({2, 3, 4, 4}, rng).detach();
    grad_case("batchnorm2d", {x, g, b}, [&] { return sum(mul(batchnorm2d(x, g, b, st, true), target)); }, 1e-4);
  }
  {
    auto x = random_leaf({2, 3, 2, 2}, rng);
    LabelMap labels(2, 2, 2, {0, 1, 2, 1, 2, 2, 0, 1});
    grad_case("gd+lsce", {x}, [&] { return add(gd_loss(softmax(x, 1), labels), lsce_loss(x, labels, 0.1)); }, 1e-4);
  }

  {
    int mismatches = 0;
    for (int t = 0; t < 50; ++t) {
      std::vector<std::uint8_t> cells(256);
      for (auto& c : cells) c = rng.uniform() < 0.7;
      const BinaryMask m(16, 16, cells);
      if (!(exact_dt(m, 20) == cascaded_conv_dt(m, 20))) ++mismatches;
    }
    report("dt equivalence", mismatches == 0, std::to_string(mismatches) + " mismatches in 50 masks");
  }
  {
    auto probs = Tensor::full({1, 2, 2, 2}, 0.5, DType::F64);
    LabelMap labels(1, 2, 2, {0, 0, 0, 1});
    const double v = gd_loss(probs, labels).item();
    report("gd uniform case", std::abs(v - 4.0 / 7.0) < 1e-6, fmt9(v));
  }
  {
    auto q = Tensor::from({1, 2}, {1.0, 0.0}, DType::F64);
    auto queue = Tensor::from({2, 1}, {0.0, 1.0}, DType::F64);
    const double v = infonce(q, q, queue, 1.0).item();
    report("infonce closed form", std::abs(v - std::log1p(std::exp(-1.0))) < 1e-9, fmt9(v));
  }
  Tape::current().reset();
  return ok;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hi-res segmentation network: training, evaluation and pretraining", "hires"};
  app.require_subcommand(1);

  std::string config_path, out_path, log_path, init_path, ckpt_path, dump_dir;
  std::optional<std::uint64_t> data_seed, model_seed;
  std::optional<int> epochs, batch_size, steps;
  std::optional<double> lr;
  bool no_augment = false;

  auto* train_cmd = app.add_subcommand("train", "Train on the synthetic segmentation set");
  train_cmd->add_option("--config", config_path, "Flat key=value configuration file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data-seed", data_seed, "Dataset seed");
  train_cmd->add_option("--model-seed", model_seed, "Initialisation seed");
  train_cmd->add_option("--epochs", epochs, "Number of epochs");
  train_cmd->add_option("--batch-size", batch_size, "Images per step");
  train_cmd->add_option("--lr", lr, "Peak learning rate");
  train_cmd->add_option("--out", out_path, "Checkpoint to write")->required();
  train_cmd->add_option("--log", log_path, "TSV log to write");
  train_cmd->add_option("--init", init_path, "Encoder checkpoint for the funnel weights")->check(CLI::ExistingFile);
  train_cmd->add_flag("--no-augment", no_augment, "Disable flips and rescaling");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out set");
  eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data-seed", data_seed, "Dataset seed (defaults to the training seed)");
  eval_cmd->add_option("--dump-preds", dump_dir, "Directory for PGM label maps");

  PretrainConfig pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Contrastive pretraining of the funnel encoder");
  pre_cmd->add_option("--queue", pre.moco.queue_size, "Negative queue length")->capture_default_str();
  pre_cmd->add_option("--momentum", pre.moco.momentum, "Key encoder momentum")->capture_default_str();
  pre_cmd->add_option("--tau", pre.moco.tau, "InfoNCE temperature")->capture_default_str();
  pre_cmd->add_option("--lr", pre.moco.lr, "SGD learning rate")->capture_default_str();
  pre_cmd->add_option("--steps", pre.steps, "Optimisation steps")->capture_default_str();
  pre_cmd->add_option("--batch-size", pre.batch_size, "Images per step")->capture_default_str();
  pre_cmd->add_option("--data-seed", pre.data_seed, "Image seed")->capture_default_str();
  pre_cmd->add_option("--out", out_path, "Encoder checkpoint to write")->required();
  pre_cmd->add_option("--log", log_path, "TSV loss log");

  auto* inspect_cmd = app.add_subcommand("inspect", "List checkpoint tensors and parameter count");
  inspect_cmd->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);

  auto* selftest_cmd = app.add_subcommand("selftest", "Run gradient checks and oracle tests");

  std::vector<const char*> argv{"hires"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) {
      TrainConfig cfg;
      if (!config_path.empty()) cfg = load_config(config_path);
      if (data_seed) cfg.data_seed = *data_seed;
      if (model_seed) cfg.model_seed = *model_seed;
      if (epochs) cfg.epochs = *epochs;
      if (batch_size) cfg.batch_size = *batch_size;
      if (lr) cfg.lr = *lr;
      if (no_augment) cfg.augment = false;
      cfg.validate();
      HiResNet net(cfg.net, cfg.model_seed);
      if (!init_path.empty()) restore(load_checkpoint(init_path), net.params(), nullptr, true);
      OptimState opt;
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw std::runtime_error("cannot write " + log_path);
      }
      const auto result = train(net, opt, cfg, log_path.empty() ? nullptr : &log_file);
      save_checkpoint(snapshot(net.params(), &opt, checkpoint_meta(cfg, "full", opt.step)), out_path);
      if (result.last_val) {
        out << "val\tmiou\t" << fmt9(result.last_val->metrics.miou) << "\n";
      }
      return 0;
    }
    if (*eval_cmd) {
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto* kind = ckpt.meta_value("kind");
      if (kind == nullptr || *kind != "full") throw std::runtime_error("eval needs a full network checkpoint");
      auto cfg = config_from_meta(ckpt);
      if (data_seed) cfg.data_seed = *data_seed;
      HiResNet net(cfg.net, cfg.model_seed);
      restore(ckpt, net.params(), nullptr);
      const auto data = synth_dataset(val_spec(cfg));
      const auto r = evaluate(net, data, cfg.loss, cfg.batch_size);
      out << "metric\tvalue\n";
      out << "miou\t" << fmt9(r.metrics.miou) << "\n";
      out << "mean_f1\t" << fmt9(r.metrics.mean_f1) << "\n";
      out << "oa\t" << fmt9(r.metrics.oa) << "\n";
      out << "loss_total\t" << fmt9(r.loss_total) << "\n";
      for (std::size_t c = 0; c < r.metrics.iou.size(); ++c) {
        out << "iou_" << c << "\t" << fmt9(r.metrics.iou[c]) << "\n";
        out << "f1_" << c << "\t" << fmt9(r.metrics.f1[c]) << "\n";
      }
      if (!dump_dir.empty()) {
        std::filesystem::create_directories(dump_dir);
        const auto plane = static_cast<std::size_t>(data.height) * static_cast<std::size_t>(data.width);
        for (std::size_t i = 0; i < data.samples.size(); ++i) {
          write_pgm(std::filesystem::path(dump_dir) / ("pred_" + std::to_string(i) + ".pgm"), data.height,
                    data.width, r.predictions.data() + i * plane);
        }
      }
      return 0;
    }
    if (*pre_cmd) {
      ToyEncoder enc(pre.channels, pre.ib_blocks, pre.feature_dim, pre.model_seed);
      std::ofstream log_file;
      if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw std::runtime_error("cannot write " + log_path);
      }
      const auto r = pretrain(enc, pre, log_path.empty() ? nullptr : &log_file);
      std::vector<std::pair<std::string, std::string>> meta{
          {"kind", "encoder"},
          {"step", std::to_string(pre.steps)},
          {"moco.queue", std::to_string(pre.moco.queue_size)},
          {"moco.momentum", fmt9(pre.moco.momentum)},
          {"moco.tau", fmt9(pre.moco.tau)}};
      save_checkpoint(snapshot(enc.params(), nullptr, std::move(meta)), out_path);
      out << "final_loss\t" << fmt9(r.losses.empty() ? 0.0 : r.losses.back()) << "\n";
      out << "separation\t" << fmt9(r.separation) << "\n";
      return 0;
    }
    if (*inspect_cmd) {
      const auto ckpt = load_checkpoint(ckpt_path);
      for (const auto& [k, v] : ckpt.meta) out << "meta\t" << k << "\t" << v << "\n";
      std::int64_t count = 0;
      for (const auto& t : ckpt.tensors) {
        out << "tensor\t" << t.name << "\t" << shape_str(t.shape) << "\n";
        if (t.name.rfind("opt.", 0) != 0 && !is_buffer(t.name)) count += numel_of(t.shape);
      }
      out << "param_count\t" << count << "\n";
      return 0;
    }
    if (*selftest_cmd) {
      return run_selftest(out) ? 0 : 2;
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace hires
