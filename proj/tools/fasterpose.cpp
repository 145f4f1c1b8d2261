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

// Command-line front end: gen-data, train, eval, converge, analyze, gradcheck.
// Every subcommand reads an optional JSON config (--config) and then applies
// --set key=value overrides addressed by dotted paths.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fasterpose/fasterpose.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fasterpose;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("-c,--config", a.config, "JSON config file");
  cmd->add_option("-s,--set", a.overrides, "Override, key=value (repeatable)")
      ->allow_extra_args(false);
}

// Small configs: defaults, then the file, then overrides; unknown keys fail.
json load_small_config(const json& defaults, const CommonArgs& a) {
  json j = defaults;
  if (!a.config.empty()) {
    std::ifstream is(a.config);
    if (!is) throw ConfigError("cannot open config " + a.config);
    json file;
    try {
      file = json::parse(is);
    } catch (const json::parse_error& e) {
      throw ConfigError(a.config + ": parse error at byte " +
                        std::to_string(e.byte));
    }
    if (!file.is_object()) throw ConfigError(a.config + ": expected an object");
    j.merge_patch(file);
  }
  for (const auto& o : a.overrides) apply_override(j, o);
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) throw ConfigError("unknown config key '" + k + "'");
  return j;
}

template <typename V>
V field(const json& j, const char* key) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

json eval_json(const metrics::EvalResult& r) {
  return {{"AP", r.ap},     {"AP50", r.ap50}, {"AP75", r.ap75}, {"AR", r.ar},
          {"PCKh", r.pckh}, {"PCKh_per_keypoint", r.pckh_per_keypoint}};
}

std::pair<DataSplit, DataSplit> load_splits(const TrainConfig& c) {
  return {load_split(c.train_dir, c.train_count, c.input_width, c.input_height,
                     c.data_seed),
          load_split(c.val_dir, c.val_count, c.input_width, c.input_height,
                     val_seed(c.data_seed))};
}

int cmd_gen_data(const CommonArgs& a) {
  const json j = load_small_config(
      {{"out", "data/train"}, {"count", 2000}, {"width", 64}, {"height", 64},
       {"seed", 2026}},
      a);
  const auto out = field<std::string>(j, "out");
  const auto ds = gen_synthetic_dataset(out, field<std::size_t>(j, "count"),
                                        field<std::size_t>(j, "width"),
                                        field<std::size_t>(j, "height"),
                                        field<std::uint64_t>(j, "seed"));
  std::printf("wrote %zu images to %s\n", ds.images.size(), out.c_str());
  return 0;
}

int cmd_train(const CommonArgs& a) {
  const TrainConfig cfg = load_train_config(a.config, a.overrides);
  if (cfg.output_dir.empty())
    throw ConfigError("output_dir is required (--set output_dir=DIR)");
  const auto [tr, val] = load_splits(cfg);
  std::printf("%s\n", csv_header().c_str());
  const auto r = train(cfg, tr, val, [](const EpochRow& row) {
    std::printf("%s\n", csv_row(row).c_str());
    std::fflush(stdout);
  });
  write_run(cfg.output_dir, cfg, r);
  std::fprintf(stderr, "trained %zu epochs in %.1fs; wrote %s\n",
               r.rows.size(), r.seconds, cfg.output_dir.c_str());
  return 0;
}

int cmd_eval(const CommonArgs& a, const std::string& ckpt) {
  const TrainConfig cfg = load_train_config(a.config, a.overrides);
  const DataSplit val = load_split(cfg.val_dir, cfg.val_count, cfg.input_width,
                                   cfg.input_height, val_seed(cfg.data_seed));
  std::mt19937_64 rng(cfg.seed);
  Model model(cfg.backbone, cfg.head, rng);
  model.load(checkpoint::load<float>(ckpt));
  const FlushDenormals ftz;
  const json j = eval_json(evaluate(model, cfg, val));
  std::printf("%s\n", j.dump(2).c_str());
  if (!cfg.output_dir.empty()) write_json(fs::path(cfg.output_dir) / "eval.json", j);
  return 0;
}

int cmd_converge(const CommonArgs& a, ConvergenceOptions opt) {
  const TrainConfig cfg = load_train_config(a.config, a.overrides);
  if (cfg.output_dir.empty())
    throw ConfigError("output_dir is required (--set output_dir=DIR)");
  opt.log = [](const std::string& s) {
    std::fprintf(stderr, "%s\n", s.c_str());
  };
  const auto [runs, s] = run_convergence_experiment(cfg, opt, cfg.output_dir);
  json j;
  for (std::size_t i = 0; i < s.configs.size(); ++i)
    j["median_final_ap"][s.configs[i]] = s.median_final_ap[i];
  j["rce_epochs_to_mse_final"] = s.rce_epochs_to_mse;
  j["median_rce_epochs_to_mse_final"] = s.median_rce_epochs_to_mse;
  j["epochs"] = s.epochs;
  j["seeds"] = opt.seeds;
  j["total_seconds"] = s.total_seconds;
  write_json(fs::path(cfg.output_dir) / "summary.json", j);
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

int cmd_analyze(const CommonArgs& a) {
  const json j = load_small_config(
      {{"height", 256}, {"width", 192}, {"out", ""}, {"toy_config", ""}}, a);
  const complexity::Extent in{field<std::uint64_t>(j, "height"),
                              field<std::uint64_t>(j, "width")};
  using namespace complexity;
  const auto lhr = count_resnet50(baseline_lhr(), in);
  const auto dec = count_resnet50(baseline_deconv(), in);
  std::printf("LHR head (M=2048, N=17, L=8)\n%s\n", format_table(lhr).c_str());
  std::printf("Deconv head (3 x 256 filters, K=4)\n%s\n",
              format_table(dec).c_str());
  const double red = regressor_reduction(baseline_lhr(), baseline_deconv());
  std::printf("regressor weights: LHR %llu, deconv %llu, reduction %.1f%%\n\n",
              static_cast<unsigned long long>(count_head_params(baseline_lhr())),
              static_cast<unsigned long long>(count_head_params(baseline_deconv())),
              100.0 * red);
  json out;
  out["lhr"] = to_json(lhr);
  out["deconv"] = to_json(dec);
  out["regressor_reduction"] = red;
  std::printf("resolution ablation (ResNet-50, 256x192)\n");
  std::printf("%-10s %8s %14s %10s\n", "features", "deconv", "params", "GFLOPs");
  for (const auto& r : resolution_ablation_report()) {
    std::printf("%4llux%-5llu %8zu %14llu %10.3f\n",
                static_cast<unsigned long long>(r.feature.height),
                static_cast<unsigned long long>(r.feature.width),
                r.deconv_layers, static_cast<unsigned long long>(r.params),
                static_cast<double>(r.macs) / 1e9);
    out["ablation"].push_back({{"feature_height", r.feature.height},
                               {"feature_width", r.feature.width},
                               {"deconv_layers", r.deconv_layers},
                               {"params", r.params},
                               {"macs", r.macs}});
  }
  const auto toy_path = field<std::string>(j, "toy_config");
  const TrainConfig toy = load_train_config(toy_path, {});
  const auto tr = count_flops(toy.backbone, toy.head,
                              {toy.input_height, toy.input_width});
  std::printf("\ntoy model (%zux%zu input)\n%s", toy.input_height,
              toy.input_width, format_table(tr).c_str());
  out["toy"] = to_json(tr);
  const auto dest = field<std::string>(j, "out");
  if (!dest.empty()) write_json(dest, out);
  return 0;
}

int cmd_gradcheck(const CommonArgs& a) {
  const json j = load_small_config(
      {{"seed", 1}, {"repeats", 4}, {"tolerance", 1e-6}}, a);
  const auto cases = gradcheck::run_suite(field<std::uint64_t>(j, "seed"),
                                          field<std::size_t>(j, "repeats"));
  const double tol = field<double>(j, "tolerance");
  std::size_t failed = 0;
  for (const auto& c : cases) {
    const bool ok = c.max_rel_error < tol;
    failed += !ok;
    std::printf("%-28s %-4s max_rel %.3e  checked %zu  skipped %zu\n",
                c.name.c_str(), ok ? "ok" : "FAIL", c.max_rel_error, c.checked,
                c.nonsmooth);
  }
  std::printf("%zu cases, %zu failed, max relative error %.3e\n", cases.size(),
              failed, gradcheck::max_error(cases));
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FasterPose toolkit: data, training, evaluation and analysis",
               "fasterpose"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, conv_args, analyze_args, grad_args;
  std::string ckpt;
  ConvergenceOptions conv_opt;

  auto* gen = app.add_subcommand("gen-data", "Render a synthetic stick-figure dataset");
  add_common(gen, gen_args);
  auto* tr = app.add_subcommand("train", "Train one model and write metrics.csv and model.ckpt");
  add_common(tr, train_args);
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the validation split");
  add_common(ev, eval_args);
  ev->add_option("--checkpoint", ckpt, "model.ckpt to load")->required();
  auto* cv = app.add_subcommand("converge", "Run the head/loss convergence matrix");
  add_common(cv, conv_args);
  cv->add_option("--seeds", conv_opt.seeds, "Seeds per configuration");
  cv->add_option("--deconv-filters", conv_opt.deconv_filters, "Deconv head filters");
  cv->add_option("--deconv-layers", conv_opt.deconv_layers, "Deconv head layers");
  auto* an = app.add_subcommand("analyze", "Parameter and FLOP accounting");
  add_common(an, analyze_args);
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  add_common(gc, grad_args);

  if (argc < 2) {
    std::cerr << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_args);
    if (*tr) return cmd_train(train_args);
    if (*ev) return cmd_eval(eval_args, ckpt);
    if (*cv) return cmd_converge(conv_args, conv_opt);
    if (*an) return cmd_analyze(analyze_args);
    if (*gc) return cmd_gradcheck(grad_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
