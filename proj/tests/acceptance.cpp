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

// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Usage: acceptance [--work-dir DIR] [--skip-convergence]

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fasterpose/fasterpose.hpp"

namespace fs = std::filesystem;
using namespace fasterpose;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", id,
              detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

template <typename... A>
std::string fmt(const char* f, A... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

PoseInstance single(double x, double y) {
  PoseInstance p;
  p.keypoints = {Keypoint{x, y, 2}};
  return p;
}

void target_statistics() {
  struct Row {
    std::size_t h, w;
    double sigma;
    std::size_t pos, neg;
  };
  bool ok = true;
  std::string detail;
  for (const Row& r : {Row{64, 48, 2.0, 113, 2959}, Row{96, 72, 3.0, 261, 6651}}) {
    TargetConfig cfg;
    cfg.sigma = r.sigma;
    const auto c = count_pos_neg(gen_target(single(20.0, 30.0), r.h, r.w, cfg))[0];
    ok = ok && c.positives == r.pos && c.negatives == r.neg;
    detail += fmt("%zux%zu sigma %.0f: %zu/%zu  ", r.h, r.w, r.sigma,
                  c.positives, c.negatives);
  }
  report(1, ok, detail);
}

void parameter_accounting() {
  using namespace complexity;
  const auto lhr_head = count_head_params(baseline_lhr());
  const auto dec_head = count_head_params(baseline_deconv());
  const double red = regressor_reduction(baseline_lhr(), baseline_deconv());
  const auto lhr = count_resnet50(baseline_lhr(), {256, 192}).total_params();
  const auto dec = count_resnet50(baseline_deconv(), {256, 192}).total_params();
  bool ok = lhr_head == 2228224 && dec_head == 10490112 &&
            std::abs(red - 0.788) < 0.0015 &&
            std::abs(lhr / 1e6 - 25.7) <= 0.2 && std::abs(dec / 1e6 - 34.0) <= 0.2;
  const double want[4] = {25.6, 31.9, 33.0, 34.0};
  const auto rows = resolution_ablation_report();
  std::string abl;
  ok = ok && rows.size() == 4;
  for (std::size_t i = 0; i < rows.size() && i < 4; ++i) {
    ok = ok && std::abs(rows[i].params / 1e6 - want[i]) <= 0.2;
    abl += fmt("%.2f ", rows[i].params / 1e6);
  }
  report(2, ok,
         fmt("heads %llu / %llu, reduction %.1f%%, totals %.2fM / %.2fM, "
             "ablation %sM",
             static_cast<unsigned long long>(lhr_head),
             static_cast<unsigned long long>(dec_head), 100 * red, lhr / 1e6,
             dec / 1e6, abl.c_str()));
}

void flop_accounting() {
  using namespace complexity;
  const double lhr = count_resnet50(baseline_lhr(), {256, 192}).gflops();
  const double dec = count_resnet50(baseline_deconv(), {256, 192}).gflops();
  bool ratio_ok = true;
  for (std::size_t L : {1, 2, 4, 8}) {
    const auto l = head_components(HeadSpec::lhr(2048, 17, L), {8, 6});
    const auto p = head_components(HeadSpec::pixel_shuffle(2048, 17, L), {8, 6});
    ratio_ok = ratio_ok && 9 * l[0].macs == p[0].macs;
  }
  const bool ok = std::abs(lhr / 3.8 - 1) <= 0.15 &&
                  std::abs(dec / 9.0 - 1) <= 0.15 && ratio_ok;
  report(3, ok,
         fmt("GFLOPs (MACs) %.2f vs 3.8, %.2f vs 9.0; LHR/PixelShuffle cost "
             "%s 1/9",
             lhr, dec, ratio_ok ? "=" : "!="));
}

void gradient_correctness() {
  std::vector<gradcheck::CaseResult> all;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto c = gradcheck::run_suite(seed, 2);
    all.insert(all.end(), c.begin(), c.end());
  }
  const double worst = gradcheck::max_error(all);
  report(4, all.size() >= 100 && worst < 1e-6,
         fmt("%zu cases, max relative error %.2e", all.size(), worst));
}

void saturation() {
  using loss::detail::element_loss;
  LossSpec rce;
  rce.kind = LossKind::kFocalRce;
  rce.alpha = std::nullopt;
  rce.gamma = 1.0;
  LossSpec rce0 = rce;
  rce0.gamma = 0.0;
  LossSpec mse;
  mse.kind = LossKind::kMse;
  const double g1 = std::abs(element_loss(rce, -15.0, 1.0).grad);
  const double g0 = std::abs(element_loss(rce0, -15.0, 1.0).grad);
  const double gm = std::abs(element_loss(mse, -15.0, 1.0).grad);
  const double big = loss::rce_term(1.0 - 1e-6);
  LossSpec plain;
  plain.kind = LossKind::kRce;
  LossSpec ce;
  ce.kind = LossKind::kCeMask;
  bool equal = true;
  for (int i = -4000; i <= 4000; ++i) {
    const double x = i * 0.01;
    for (double t : {0.0, 1.0})
      equal = equal && std::bit_cast<std::uint64_t>(element_loss(plain, x, t).value) ==
                           std::bit_cast<std::uint64_t>(element_loss(ce, x, t).value);
  }
  const bool ok = g1 >= 0.95 && g1 <= 1.0 && gm < 1e-5 && big > 13.8 && equal;
  report(5, ok,
         fmt("|dRCE/dx| gamma=1 %.7f (gamma=0 %.7f), |dMSE/dx| %.2e, "
             "RCE(1-1e-6) %.2f, RCE==CE %s",
             g1, g0, gm, big, equal ? "bitwise" : "NO"));
}

void lhr_oracle() {
  std::mt19937_64 rng(6);
  bool ok = true;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t M = 1 + rng() % 48, N = 1 + rng() % 17, L = 1 + rng() % 4;
    const std::size_t B = 1 + rng() % 2, H = 1 + rng() % 6, W = 1 + rng() % 6;
    const Head<float> head(HeadSpec::lhr(M, N, L), rng);
    Tensor<float> x({B, M, H, W});
    x.fill_uniform(rng, -2.f, 2.f);
    Graph<float> g;
    const auto params = head.bind(g);
    const auto got = head.forward(g.constant(x), params).value();
    const auto& w = head.entries()[0].value;
    ok = ok && got == ops::depth_to_space(ops::conv2d(x, w, 1, 0), L);
  }
  report(6, ok, "LHR head vs 1x1 conv + depth_to_space over 20 random shapes");
}

void decode_fidelity() {
  bool exact = true;
  for (double stride : {1.0, 4.0})
    for (int x = 2; x < 14; x += 3)
      for (int y = 1; y < 15; y += 4) {
        TargetConfig cfg;
        cfg.stride = stride;
        const auto p = decode(gen_target(single(x * stride, y * stride), 16, 16, cfg));
        exact = exact && p.keypoints[0].x == x * stride && p.keypoints[0].y == y * stride;
      }
  double worst = 0.0;
  TargetConfig cont;
  cont.snap_center = false;
  for (double fx = 0.0; fx < 1.0; fx += 0.125)
    for (double fy = 0.0; fy < 1.0; fy += 0.125) {
      const double x = 9.0 + fx, y = 6.0 + fy;
      const auto p = decode(gen_target(single(x, y), 16, 20, cont));
      worst = std::max(worst, std::hypot(p.keypoints[0].x - x, p.keypoints[0].y - y));
    }
  HeatmapSet sym{Tensor<double>({1, 5, 5}), 1.0, 0.0, true};
  sym.maps.at(0, 2, 2) = 1.0;
  sym.maps.at(0, 2, 1) = sym.maps.at(0, 2, 3) = 0.6;
  sym.maps.at(0, 1, 2) = sym.maps.at(0, 3, 2) = 0.3;
  const auto s = decode(sym);
  const bool zero = s.keypoints[0].x == 2.0 && s.keypoints[0].y == 2.0;
  report(7, exact && worst <= 0.5 && zero,
         fmt("integer grid %s, half-pixel max error %.3f px, symmetric peak "
             "offset %s",
             exact ? "exact" : "INEXACT", worst, zero ? "zero" : "NONZERO"));
}

void convergence(const fs::path& work) {
  TrainConfig base;
  ConvergenceOptions opt;
  opt.log = [](const std::string& s) { std::printf("    %s\n", s.c_str()); };
  const auto t0 = std::chrono::steady_clock::now();
  const auto [runs, s] =
      run_convergence_experiment(base, opt, (work / "convergence").string());
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rce = s.median_of("lhr_focal_rce"), mse = s.median_of("lhr_mse");
  const double onehot = s.median_of("lhr_ce_onehot"), mask = s.median_of("lhr_ce_mask");
  const double limit = 0.6 * static_cast<double>(s.epochs);
  const bool order = rce >= mse && rce >= onehot && rce >= mask;
  const bool speed = s.median_rce_epochs_to_mse <= limit;
  const bool time = wall < 1800.0;
  std::printf("    median AP: mse %.4f focal_rce %.4f ce_onehot %.4f ce_mask %.4f "
              "deconv_mse %.4f\n",
              mse, rce, onehot, mask, s.median_of("deconv_mse"));
  report(8, order && speed && time,
         fmt("ordering %s, RCE reaches MSE final AP at median epoch %.0f "
             "(limit %.0f) %s, wall %.0fs (limit 1800s) %s",
             order ? "ok" : "VIOLATED", s.median_rce_epochs_to_mse, limit,
             speed ? "ok" : "EXCEEDED", wall, time ? "ok" : "EXCEEDED"));
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
  return rc;
}

void determinism(const fs::path& work) {
  const std::string cli = FASTERPOSE_CLI;
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg = dir / "config.json";
  TrainConfig tiny;
  tiny.input_height = 32;
  tiny.input_width = 32;
  tiny.backbone = BackboneSpec::toy(16);
  tiny.head = HeadSpec::lhr(16, 5, 2);
  tiny.epochs = 2;
  tiny.decay_epochs = {1};
  tiny.batch_size = 8;
  tiny.train_count = 24;
  tiny.val_count = 8;
  tiny.train_dir = (dir / "train").string();
  tiny.val_dir = (dir / "val").string();
  std::ofstream(cfg) << to_json(tiny).dump(2);
  bool ok = true;
  for (const char* split : {"train", "val"})
    for (int rep = 0; rep < 2; ++rep) {
      const auto out = dir / (std::string(split) + std::to_string(rep));
      ok = ok && run(cli + " gen-data -s out=" + out.string() +
                     " -s count=" + (split[0] == 't' ? "24" : "8") +
                     " -s width=32 -s height=32 -s seed=" +
                     std::to_string(split[0] == 't' ? tiny.data_seed : val_seed(tiny.data_seed))) == 0;
    }
  ok = ok && slurp(dir / "train0" / "annotations.json") ==
                 slurp(dir / "train1" / "annotations.json");
  fs::rename(dir / "train0", dir / "train");
  fs::rename(dir / "val0", dir / "val");
  for (const char* r : {"a", "b"})
    ok = ok && run(cli + " train -c " + cfg.string() + " -s output_dir=" +
                   (dir / r).string()) == 0;
  std::string detail = "CLI gen-data and train repeated twice: ";
  if (!ok) {
    report(9, false, detail + "a CLI invocation failed or data differed");
    return;
  }
  const bool csv = !slurp(dir / "a" / "metrics.csv").empty() &&
                   slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv");
  const bool ckpt = !slurp(dir / "a" / "model.ckpt").empty() &&
                    slurp(dir / "a" / "model.ckpt") == slurp(dir / "b" / "model.ckpt");
  report(9, csv && ckpt,
         detail + "metrics.csv " + (csv ? "identical" : "DIFFERS") +
             ", model.ckpt " + (ckpt ? "identical" : "DIFFERS"));
}

void metric_sanity() {
  using namespace metrics;
  PoseInstance gt;
  for (int i = 0; i < 17; ++i) gt.keypoints.push_back({4.0 + i, 2.0 * i, 2});
  gt.area = 1234.0;
  const bool perfect = oks(gt, gt, k_from_sigmas(coco_sigmas())) == 1.0;
  double worst = 0.0;
  for (double area : {1.0, 100.0, 9876.5})
    for (double k : {0.025, 0.079, 0.107}) {
      PoseInstance g = single(3.0, 4.0), p = single(3.0, 4.0);
      g.area = area;
      const double d = std::sqrt(2.0 * area * k * k);
      p.keypoints[0].x += d;
      worst = std::max(worst, std::abs(oks(p, g, {k}) - std::exp(-1.0)));
    }
  const bool boundary = pckh(single(3.0, 4.0), single(0.0, 0.0), 10.0, 0.5).correct[0] == 1;
  report(10, perfect && worst <= 1e-12 && boundary,
         fmt("OKS(gt,gt) %s 1, |OKS - 1/e| max %.1e, PCKh at exactly 0.5h %s",
             perfect ? "=" : "!=", worst, boundary ? "correct" : "INCORRECT"));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "fasterpose_acceptance";
  bool skip_convergence = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--skip-convergence") {
      skip_convergence = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--work-dir DIR] [--skip-convergence]\n");
      return 2;
    }
  }
  fs::create_directories(work);
  try {
    target_statistics();
    parameter_accounting();
    flop_accounting();
    gradient_correctness();
    saturation();
    lhr_oracle();
    decode_fidelity();
    if (skip_convergence)
      std::printf("[SKIP] criterion  8: convergence experiment not run\n");
    else
      convergence(work);
    determinism(work);
    metric_sanity();
  } catch (const std::exception& e) {
    std::printf("[FAIL] aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
