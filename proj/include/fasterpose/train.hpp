// Copyright 2026 The FasterPose Toolkit Authors. All Rights Reserved.
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

// Training configuration, the seeded training loop, flip-tested evaluation
// and the head/loss convergence matrix.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#if defined(__SSE2__)
#include <pmmintrin.h>
#include <xmmintrin.h>
#endif

#include "fasterpose/augment.hpp"
#include "fasterpose/autodiff.hpp"
#include "fasterpose/checkpoint.hpp"
#include "fasterpose/dataset.hpp"
#include "fasterpose/heads.hpp"
#include "fasterpose/heatmap.hpp"
#include "fasterpose/losses.hpp"
#include "fasterpose/metrics.hpp"
#include "fasterpose/optim.hpp"

namespace fasterpose {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, const std::string& what)
      : std::runtime_error("training diverged at epoch " +
                           std::to_string(epoch) + ": " + what),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct TrainConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  BackboneSpec backbone = BackboneSpec::toy(64);
  HeadSpec head = HeadSpec::lhr(64, 5, 2);
  LossSpec loss;
  /// Gaussian spread of the targets, in heatmap cells.
  double target_sigma = 1.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 60;
  double lr = 1e-3;
  std::vector<std::size_t> decay_epochs = {40, 52};
  double decay_factor = 0.1;
  AugmentConfig augment;
  std::uint64_t seed = 1;
  bool flip_test = true;
  bool flip_shift = true;
  /// Data: directories written by gen-data, or generated in memory when
  /// empty.
  std::string train_dir;
  std::string val_dir;
  std::size_t train_count = 2000;
  std::size_t val_count = 500;
  std::uint64_t data_seed = 2026;
  std::string output_dir;

  void validate() const {
    backbone.validate();
    head.validate();
    loss.validate();
    augment.validate();
    if (head.in_channels != backbone.out_channels())
      throw ConfigError("head.in_channels must equal the backbone output "
                        "channels (" +
                        std::to_string(backbone.out_channels()) + ")");
    const std::size_t s = backbone.total_stride();
    if (input_height % s || input_width % s)
      throw ConfigError("input extent must be divisible by the backbone "
                        "stride " + std::to_string(s));
    if (s % head.magnification())
      throw ConfigError("head magnification exceeds the backbone stride");
    if (!(target_sigma > 0.0)) throw ConfigError("target_sigma must be > 0");
    if (batch_size == 0) throw ConfigError("batch_size must be > 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    for (auto e : decay_epochs)
      if (epochs > 0 && e >= epochs)
        throw ConfigError("decay epoch " + std::to_string(e) +
                          " is not below the epoch count " +
                          std::to_string(epochs));
    if (train_dir.empty() && train_count == 0)
      throw ConfigError("train_count must be > 0");
    if (val_dir.empty() && val_count == 0)
      throw ConfigError("val_count must be > 0");
  }

  std::size_t output_stride() const {
    return backbone.total_stride() / head.magnification();
  }

  double lr_at(std::size_t epoch) const {
    double r = lr;
    for (auto e : decay_epochs)
      if (epoch >= e) r *= decay_factor;
    return r;
  }
};

// JSON mapping. Every field is addressable by a dotted path.

inline nlohmann::json to_json(const BackboneSpec& b) {
  nlohmann::json j;
  j["in_channels"] = b.in_channels;
  j["stages"] = nlohmann::json::array();
  for (const auto& s : b.stages)
    j["stages"].push_back(
        {{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}});
  return j;
}

inline nlohmann::json to_json(const HeadSpec& h) {
  return {{"kind", std::string(head_kind_name(h.kind))},
          {"in_channels", h.in_channels},
          {"keypoints", h.keypoints},
          {"upsample", h.upsample},
          {"filters", h.filters},
          {"kernel", h.kernel},
          {"layers", h.layers},
          {"bias", h.bias}};
}

inline nlohmann::json to_json(const LossSpec& l) {
  nlohmann::json j = {{"kind", std::string(loss_kind_name(l.kind))},
                      {"gamma", l.gamma},
                      {"applies_sigmoid", l.applies_sigmoid}};
  j["alpha"] = l.alpha ? nlohmann::json(*l.alpha) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"input_height", c.input_height},
          {"input_width", c.input_width},
          {"backbone", to_json(c.backbone)},
          {"head", to_json(c.head)},
          {"loss", to_json(c.loss)},
          {"target_sigma", c.target_sigma},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"decay_epochs", c.decay_epochs},
          {"decay_factor", c.decay_factor},
          {"augment",
           {{"scale", c.augment.scale},
            {"rotation", c.augment.rotation},
            {"flip_prob", c.augment.flip_prob}}},
          {"seed", c.seed},
          {"flip_test", c.flip_test},
          {"flip_shift", c.flip_shift},
          {"train_dir", c.train_dir},
          {"val_dir", c.val_dir},
          {"train_count", c.train_count},
          {"val_count", c.val_count},
          {"data_seed", c.data_seed},
          {"output_dir", c.output_dir}};
}

namespace detail {

template <typename V>
void read_field(const nlohmann::json& j, const char* key, V& out,
                const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + key + ": " + e.what());
  }
}

inline void check_keys(const nlohmann::json& j,
                       std::initializer_list<const char*> known,
                       const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(known.begin(), known.end(),
                     [&](const char* n) { return k == n; }))
      throw ConfigError("unknown config key '" + path + k + "'");
  }
}

}  // namespace detail

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  using detail::read_field;
  detail::check_keys(j,
                     {"input_height", "input_width", "backbone", "head", "loss",
                      "target_sigma", "batch_size", "epochs", "lr",
                      "decay_epochs", "decay_factor", "augment", "seed",
                      "flip_test", "flip_shift", "train_dir", "val_dir",
                      "train_count", "val_count", "data_seed", "output_dir"},
                     "");
  TrainConfig c;
  read_field(j, "input_height", c.input_height, "");
  read_field(j, "input_width", c.input_width, "");
  if (j.contains("backbone")) {
    const auto& b = j["backbone"];
    detail::check_keys(b, {"in_channels", "stages"}, "backbone.");
    read_field(b, "in_channels", c.backbone.in_channels, "backbone.");
    if (b.contains("stages")) {
      c.backbone.stages.clear();
      for (const auto& s : b["stages"]) {
        BackboneStage st;
        read_field(s, "channels", st.channels, "backbone.stages.");
        read_field(s, "kernel", st.kernel, "backbone.stages.");
        read_field(s, "stride", st.stride, "backbone.stages.");
        c.backbone.stages.push_back(st);
      }
    }
  }
  if (j.contains("head")) {
    const auto& h = j["head"];
    detail::check_keys(h,
                       {"kind", "in_channels", "keypoints", "upsample",
                        "filters", "kernel", "layers", "bias"},
                       "head.");
    std::string kind(head_kind_name(c.head.kind));
    read_field(h, "kind", kind, "head.");
    try {
      c.head.kind = parse_head_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("head.kind: ") + e.what());
    }
    read_field(h, "in_channels", c.head.in_channels, "head.");
    read_field(h, "keypoints", c.head.keypoints, "head.");
    read_field(h, "upsample", c.head.upsample, "head.");
    read_field(h, "filters", c.head.filters, "head.");
    read_field(h, "kernel", c.head.kernel, "head.");
    read_field(h, "layers", c.head.layers, "head.");
    read_field(h, "bias", c.head.bias, "head.");
  }
  if (j.contains("loss")) {
    const auto& l = j["loss"];
    detail::check_keys(l, {"kind", "alpha", "gamma", "applies_sigmoid"},
                       "loss.");
    std::string kind(loss_kind_name(c.loss.kind));
    read_field(l, "kind", kind, "loss.");
    try {
      c.loss.kind = parse_loss_kind(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("loss.kind: ") + e.what());
    }
    if (l.contains("alpha")) {
      if (l["alpha"].is_null()) {
        c.loss.alpha.reset();
      } else {
        double a = 0.0;
        read_field(l, "alpha", a, "loss.");
        c.loss.alpha = a;
      }
    }
    read_field(l, "gamma", c.loss.gamma, "loss.");
    read_field(l, "applies_sigmoid", c.loss.applies_sigmoid, "loss.");
  }
  read_field(j, "target_sigma", c.target_sigma, "");
  read_field(j, "batch_size", c.batch_size, "");
  read_field(j, "epochs", c.epochs, "");
  read_field(j, "lr", c.lr, "");
  read_field(j, "decay_epochs", c.decay_epochs, "");
  read_field(j, "decay_factor", c.decay_factor, "");
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    detail::check_keys(a, {"scale", "rotation", "flip_prob"}, "augment.");
    read_field(a, "scale", c.augment.scale, "augment.");
    read_field(a, "rotation", c.augment.rotation, "augment.");
    read_field(a, "flip_prob", c.augment.flip_prob, "augment.");
  }
  read_field(j, "seed", c.seed, "");
  read_field(j, "flip_test", c.flip_test, "");
  read_field(j, "flip_shift", c.flip_shift, "");
  read_field(j, "train_dir", c.train_dir, "");
  read_field(j, "val_dir", c.val_dir, "");
  read_field(j, "train_count", c.train_count, "");
  read_field(j, "val_count", c.val_count, "");
  read_field(j, "data_seed", c.data_seed, "");
  read_field(j, "output_dir", c.output_dir, "");
  return c;
}

/// Applies "dotted.path=value" to a JSON document. The value is parsed as
/// JSON when possible and taken as a string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  std::string pointer;
  for (char ch : key) pointer += ch == '.' ? '/' : ch;
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  j[nlohmann::json::json_pointer("/" + pointer)] = value;
}

inline TrainConfig load_train_config(const std::string& path,
                                     const std::vector<std::string>& overrides) {
  nlohmann::json j = to_json(TrainConfig{});
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path);
    nlohmann::json file;
    try {
      file = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": parse error at byte " +
                        std::to_string(e.byte));
    }
    if (!file.is_object()) throw ConfigError(path + ": expected an object");
    j.merge_patch(file);
  }
  for (const auto& o : overrides) apply_override(j, o);
  TrainConfig c = train_config_from_json(j);
  c.validate();
  return c;
}

// Training.

struct EpochRow {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  metrics::EvalResult eval;
  double lr = 0.0;
};

inline std::string csv_header() { return "epoch,loss,AP,AP50,AP75,PCKh,lr"; }

inline std::string csv_row(const EpochRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.8f,%.6f,%.6f,%.6f,%.6f,%.8g", r.epoch,
                r.loss, r.eval.ap, r.eval.ap50, r.eval.ap75, r.eval.pckh, r.lr);
  return buf;
}

using Model = PoseNet<float>;

/// Flushes subnormal floats to zero for its lifetime.
class FlushDenormals {
 public:
  FlushDenormals() {
#if defined(__SSE2__)
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040);
#endif
  }
  ~FlushDenormals() {
#if defined(__SSE2__)
    _mm_setcsr(saved_);
#endif
  }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

struct DataSplit {
  std::vector<Sample> samples;
  KeypointSchema schema;
};

inline DataSplit load_split(const std::string& dir, std::size_t count,
                            std::size_t width, std::size_t height,
                            std::uint64_t seed) {
  DataSplit s;
  if (!dir.empty()) {
    const Dataset ds =
        load_annotations(std::filesystem::path(dir) / "annotations.json");
    s.schema = ds.schema;
    s.samples = load_samples(ds);
  } else {
    s.schema = KeypointSchema::stick5();
    s.samples = synthesize(count, width, height, seed);
    quantize_in_place(s.samples);
  }
  return s;
}

/// Validation seed derived from the data seed, so both splits come from one
/// number without overlapping streams.
inline std::uint64_t val_seed(std::uint64_t data_seed) {
  return data_seed ^ 0x5DEECE66DULL;
}

inline Tensor<float> image_batch(const std::vector<const GrayImage*>& imgs) {
  const std::size_t H = imgs.front()->height, W = imgs.front()->width;
  Tensor<float> t({imgs.size(), 1, H, W});
  for (std::size_t b = 0; b < imgs.size(); ++b) {
    if (imgs[b]->height != H || imgs[b]->width != W)
      throw ShapeError("batch images differ in extent");
    std::copy(imgs[b]->pixels.begin(), imgs[b]->pixels.end(),
              t.data().begin() + static_cast<std::ptrdiff_t>(b * H * W));
  }
  return t;
}

inline GrayImage mirror(const GrayImage& img) {
  GrayImage out = img;
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      out.at(y, x) = img.at(y, img.width - 1 - x);
  return out;
}

/// Decoded predictions for a set of images, with optional flip averaging.
inline std::vector<PoseInstance> predict(const Model& model,
                                         const TrainConfig& cfg,
                                         const std::vector<Sample>& samples,
                                         const KeypointSchema& schema) {
  const std::size_t stride = cfg.output_stride();
  const bool sig = cfg.loss.applies_sigmoid;
  auto run = [&](const std::vector<const GrayImage*>& imgs) {
    Graph<float> g;
    auto pass = model.forward(g, image_batch(imgs));
    return pass.output.value();
  };
  auto maps_of = [&](const Tensor<float>& out, std::size_t b) {
    const std::size_t N = out.dim(1), Hh = out.dim(2), Wh = out.dim(3);
    HeatmapSet hs{Tensor<double>({N, Hh, Wh}), static_cast<double>(stride),
                  0.0, sig};
    const float* src = out.data().data() + b * N * Hh * Wh;
    for (std::size_t i = 0; i < N * Hh * Wh; ++i)
      hs.maps[i] = sig ? ops::sigmoid(static_cast<double>(src[i])) : src[i];
    return hs;
  };
  std::vector<PoseInstance> preds;
  constexpr std::size_t kChunk = 50;
  for (std::size_t lo = 0; lo < samples.size(); lo += kChunk) {
    const std::size_t hi = std::min(samples.size(), lo + kChunk);
    std::vector<const GrayImage*> imgs;
    std::vector<GrayImage> flipped;
    for (std::size_t i = lo; i < hi; ++i) imgs.push_back(&samples[i].image);
    const Tensor<float> out = run(imgs);
    Tensor<float> out_flip;
    if (cfg.flip_test) {
      for (std::size_t i = lo; i < hi; ++i)
        flipped.push_back(mirror(samples[i].image));
      std::vector<const GrayImage*> fimgs;
      for (const auto& f : flipped) fimgs.push_back(&f);
      out_flip = run(fimgs);
    }
    for (std::size_t b = 0; b < hi - lo; ++b) {
      HeatmapSet hs = maps_of(out, b);
      if (cfg.flip_test)
        hs = flip_average(hs, maps_of(out_flip, b), schema.pair_map,
                          cfg.flip_shift);
      PoseInstance p = decode(hs);
      p.score = instance_score(p.confidences, 1.0);
      preds.push_back(std::move(p));
    }
  }
  return preds;
}

/// AP against ground-truth boxes, one figure per image, plus PCKh.
inline metrics::EvalResult evaluate(const Model& model, const TrainConfig& cfg,
                                    const DataSplit& val) {
  const auto preds = predict(model, cfg, val.samples, val.schema);
  std::vector<metrics::ImageResult> images(val.samples.size());
  metrics::PckhAccumulator pck(val.schema.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto& ann = val.samples[i].annotation;
    images[i].gts = {ann.pose};
    images[i].preds = {preds[i]};
    const double head = ann.head_size > 0.0
                            ? ann.head_size
                            : 0.25 * std::sqrt(std::max(ann.pose.area, 1.0));
    pck.add(metrics::pckh(preds[i], ann.pose, head));
  }
  auto r = metrics::average_precision(
      images, metrics::k_from_sigmas(val.schema.sigmas));
  r.pckh_per_keypoint = pck.per_keypoint();
  r.pckh = pck.mean();
  return r;
}

struct TrainResult {
  std::vector<EpochRow> rows;
  std::vector<NamedTensor<float>> weights;
  double seconds = 0.0;
};

/// Seeded training. Initialization draws from seed; data order and
/// augmentation draw from a second stream derived from seed, so runs that
/// differ only in head or loss see identical batches.
inline TrainResult train(const TrainConfig& cfg, const DataSplit& train_data,
                         const DataSplit& val_data,
                         const std::function<void(const EpochRow&)>& on_epoch =
                             {}) {
  cfg.validate();
  if (train_data.samples.empty()) throw ConfigError("empty training split");
  train_data.schema.validate();
  if (cfg.head.keypoints != train_data.schema.size())
    throw ConfigError("head.keypoints=" + std::to_string(cfg.head.keypoints) +
                      " but the dataset has " +
                      std::to_string(train_data.schema.size()) + " keypoints");
  const auto t0 = std::chrono::steady_clock::now();
  const FlushDenormals ftz;

  std::mt19937_64 init_rng(cfg.seed);
  std::mt19937_64 data_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  Model model(cfg.backbone, cfg.head, init_rng);
  auto params = model.tensors();
  std::vector<AdamState<float>> states(params.size());

  const std::size_t stride = cfg.output_stride();
  const std::size_t Hh = cfg.input_height / stride, Wh = cfg.input_width / stride;
  const std::size_t N = cfg.head.keypoints;
  TargetConfig tcfg;
  tcfg.sigma = cfg.target_sigma;
  tcfg.stride = static_cast<double>(stride);

  TrainResult result;
  std::vector<std::size_t> order(train_data.samples.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    AdamHyper hyper;
    hyper.lr = cfg.lr_at(epoch);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(detail::uniform01(data_rng) *
                                              static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }
    double loss_sum = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::vector<GrayImage> imgs;
      Tensor<float> targets({hi - lo, N, Hh, Wh});
      for (std::size_t b = 0; b < hi - lo; ++b) {
        const Sample& s = train_data.samples[order[lo + b]];
        const AugmentDraw d = draw_augment(cfg.augment, data_rng);
        auto [img, pose] =
            apply_augment(s.image, s.annotation.pose, d, train_data.schema.pair_map);
        const HeatmapSet hm = gen_target(pose, Hh, Wh, tcfg);
        std::transform(hm.maps.data().begin(), hm.maps.data().end(),
                       targets.data().begin() +
                           static_cast<std::ptrdiff_t>(b * N * Hh * Wh),
                       [](double v) { return static_cast<float>(v); });
        imgs.push_back(std::move(img));
      }
      std::vector<const GrayImage*> ptrs;
      for (const auto& im : imgs) ptrs.push_back(&im);

      Graph<float> g;
      auto pass = model.forward(g, image_batch(ptrs));
      auto loss = ad::supervised_loss(pass.output, targets, cfg.loss);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) throw DivergenceError(epoch + 1, "non-finite loss");
      g.backward(loss);
      for (std::size_t i = 0; i < params.size(); ++i)
        adam_update(*params[i], pass.params[i].grad(), states[i], hyper);
      loss_sum += lv * static_cast<double>(hi - lo);
    }
    for (const auto* p : params)
      if (!p->all_finite()) throw DivergenceError(epoch + 1, "non-finite weights");

    EpochRow row;
    row.epoch = epoch + 1;
    row.loss = loss_sum / static_cast<double>(order.size());
    row.lr = hyper.lr;
    row.eval = evaluate(model, cfg, val_data);
    result.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  result.weights = model.named();
  result.seconds = std::chrono::duration<double>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  return result;
}

/// Writes metrics.csv, model.ckpt and config.json into dir.
inline void write_run(const std::filesystem::path& dir, const TrainConfig& cfg,
                      const TrainResult& r) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "metrics.csv");
  if (!csv) throw std::runtime_error("cannot write " + (dir / "metrics.csv").string());
  csv << csv_header() << '\n';
  for (const auto& row : r.rows) csv << csv_row(row) << '\n';
  checkpoint::save((dir / "model.ckpt").string(), r.weights);
  std::ofstream(dir / "config.json") << to_json(cfg).dump(2) << '\n';
}

// Convergence matrix.

struct MatrixEntry {
  std::string name;
  HeadSpec head;
  LossSpec loss;
};

/// LHR with MSE, focal RCE and both CE variants, plus a deconv head with MSE.
inline std::vector<MatrixEntry> convergence_matrix(const TrainConfig& base,
                                                   std::size_t deconv_filters,
                                                   std::size_t deconv_layers) {
  const std::size_t M = base.backbone.out_channels(), N = base.head.keypoints;
  const std::size_t L = base.backbone.total_stride() / base.output_stride();
  LossSpec mse{LossKind::kMse, std::nullopt, 0.0, false};
  LossSpec rce{LossKind::kFocalRce, 0.7, 1.0, true};
  LossSpec ce1{LossKind::kCeOneHot, std::nullopt, 0.0, true};
  LossSpec cem{LossKind::kCeMask, std::nullopt, 0.0, true};
  const HeadSpec lhr = HeadSpec::lhr(M, N, L);
  return {{"lhr_mse", lhr, mse},
          {"lhr_focal_rce", lhr, rce},
          {"lhr_ce_onehot", lhr, ce1},
          {"lhr_ce_mask", lhr, cem},
          {"deconv_mse",
           HeadSpec::deconv(M, deconv_filters, 4, deconv_layers, N), mse}};
}

struct ConvergenceRun {
  std::string config;
  std::uint64_t seed = 0;
  std::vector<EpochRow> rows;
  double seconds = 0.0;

  double final_ap() const { return rows.empty() ? 0.0 : rows.back().eval.ap; }
};

struct ConvergenceSummary {
  std::vector<std::string> configs;
  std::vector<double> median_final_ap;
  /// Per seed: first epoch at which focal RCE reaches the same seed's LHR+MSE
  /// final AP; epochs + 1 when never reached.
  std::vector<std::size_t> rce_epochs_to_mse;
  double median_rce_epochs_to_mse = 0.0;
  std::size_t epochs = 0;
  double total_seconds = 0.0;

  double median_of(const std::string& name) const {
    for (std::size_t i = 0; i < configs.size(); ++i)
      if (configs[i] == name) return median_final_ap[i];
    throw std::out_of_range("no config " + name);
  }
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline ConvergenceSummary summarize(const std::vector<ConvergenceRun>& runs,
                                    const std::vector<MatrixEntry>& matrix,
                                    std::size_t epochs) {
  ConvergenceSummary s;
  s.epochs = epochs;
  for (const auto& m : matrix) {
    std::vector<double> finals;
    for (const auto& r : runs)
      if (r.config == m.name) finals.push_back(r.final_ap());
    s.configs.push_back(m.name);
    s.median_final_ap.push_back(median(finals));
  }
  std::vector<double> reach;
  for (const auto& mse : runs) {
    if (mse.config != "lhr_mse") continue;
    for (const auto& rce : runs) {
      if (rce.config != "lhr_focal_rce" || rce.seed != mse.seed) continue;
      std::size_t e = epochs + 1;
      for (const auto& row : rce.rows)
        if (row.eval.ap >= mse.final_ap()) {
          e = row.epoch;
          break;
        }
      s.rce_epochs_to_mse.push_back(e);
      reach.push_back(static_cast<double>(e));
    }
  }
  s.median_rce_epochs_to_mse = median(reach);
  for (const auto& r : runs) s.total_seconds += r.seconds;
  return s;
}

struct ConvergenceOptions {
  std::size_t seeds = 3;
  std::size_t deconv_filters = 8;
  std::size_t deconv_layers = 1;
  std::function<void(const std::string&)> log;
};

/// Runs every matrix entry for seeds base.seed .. base.seed + seeds - 1 on a
/// shared dataset. Writes curves.csv and summary.csv when out_dir is set.
inline std::pair<std::vector<ConvergenceRun>, ConvergenceSummary>
run_convergence_experiment(const TrainConfig& base,
                           const ConvergenceOptions& opt,
                           const std::string& out_dir = "") {
  base.validate();
  const auto matrix =
      convergence_matrix(base, opt.deconv_filters, opt.deconv_layers);
  const DataSplit train_data =
      load_split(base.train_dir, base.train_count, base.input_width,
                 base.input_height, base.data_seed);
  const DataSplit val_data =
      load_split(base.val_dir, base.val_count, base.input_width,
                 base.input_height, val_seed(base.data_seed));
  std::vector<ConvergenceRun> runs;
  for (std::size_t k = 0; k < opt.seeds; ++k) {
    for (const auto& m : matrix) {
      TrainConfig cfg = base;
      cfg.seed = base.seed + k;
      cfg.head = m.head;
      cfg.loss = m.loss;
      auto r = train(cfg, train_data, val_data);
      runs.push_back({m.name, cfg.seed, std::move(r.rows), r.seconds});
      if (opt.log) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-14s seed %llu  final AP %.4f  %.1fs",
                      m.name.c_str(), static_cast<unsigned long long>(cfg.seed),
                      runs.back().final_ap(), runs.back().seconds);
        opt.log(buf);
      }
    }
  }
  auto summary = summarize(runs, matrix, base.epochs);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream curves(std::filesystem::path(out_dir) / "curves.csv");
    curves << "config,seed," << csv_header() << '\n';
    for (const auto& r : runs)
      for (const auto& row : r.rows)
        curves << r.config << ',' << r.seed << ',' << csv_row(row) << '\n';
    std::ofstream sum(std::filesystem::path(out_dir) / "summary.csv");
    sum << "config,seed,final_AP,epochs_to_mse_final\n";
    std::size_t rce_i = 0;
    for (const auto& r : runs) {
      char buf[160];
      std::string reach;
      if (r.config == "lhr_focal_rce" &&
          rce_i < summary.rce_epochs_to_mse.size())
        reach = std::to_string(summary.rce_epochs_to_mse[rce_i++]);
      std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%s", r.config.c_str(),
                    static_cast<unsigned long long>(r.seed), r.final_ap(),
                    reach.c_str());
      sum << buf << '\n';
    }
  }
  return {std::move(runs), std::move(summary)};
}

}  // namespace fasterpose
