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

// Synthetic stick-figure data, binary graymap I/O and the keypoint
// annotation layout.
//
// Annotation file (JSON):
//   {"keypoints": [names...], "flip_pairs": [[a, b], ...],
//    "sigmas": [...],
//    "images": [{"id", "file_name", "width", "height"}, ...],
//    "annotations": [{"id", "image_id", "keypoints": [x, y, v, ...],
//                     "bbox": [x, y, w, h], "area", "head_size"?}, ...]}
// Coordinates are pixels; integer coordinates are pixel centres.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fasterpose/heatmap.hpp"

namespace fasterpose {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Keypoint names, the left/right pairing used by flips, and the per-keypoint
/// OKS sigmas.
struct KeypointSchema {
  std::vector<std::string> names;
  std::vector<std::size_t> pair_map;
  std::vector<double> sigmas;

  std::size_t size() const noexcept { return names.size(); }

  void validate() const {
    if (names.empty()) throw DatasetError("schema has no keypoints");
    if (sigmas.size() != names.size()) {
      throw DatasetError("schema has " + std::to_string(sigmas.size()) +
                         " sigmas for " + std::to_string(names.size()) +
                         " keypoints");
    }
    try {
      validate_pairing(pair_map, names.size());
    } catch (const std::invalid_argument& e) {
      throw DatasetError(std::string("schema flip pairs: ") + e.what());
    }
  }

  /// Head, hands and feet. "left" is the figure's own left, drawn on the
  /// image's right.
  static KeypointSchema stick5() {
    return {{"head", "left_hand", "right_hand", "left_foot", "right_foot"},
            {0, 2, 1, 4, 3},
            {0.026, 0.062, 0.062, 0.089, 0.089}};
  }
};

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;  // row-major, [0, 1]

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, float fill = 0.0f)
      : width(w), height(h), pixels(w * h, fill) {}

  float& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  float at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

inline std::uint8_t quantize(float v) {
  return static_cast<std::uint8_t>(
      std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Binary (P5) graymap with maxval 255.
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i)
    bytes[i] = static_cast<char>(quantize(img.pixels[i]));
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DatasetError("short write to " + path.string());
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (is >> std::ws && is.peek() == '#') {
      std::string skip;
      std::getline(is, skip);
    }
    is >> t;
    return t;
  };
  if (token() != "P5") throw DatasetError(path.string() + ": not a P5 graymap");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw DatasetError(path.string() + ": malformed graymap header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 255) {
    throw DatasetError(path.string() + ": unsupported graymap geometry");
  }
  is.get();
  std::vector<unsigned char> bytes(w * h);
  if (!is.read(reinterpret_cast<char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()))) {
    throw DatasetError(path.string() + ": truncated pixel data");
  }
  GrayImage img(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i)
    img.pixels[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  return img;
}

struct ImageRecord {
  std::int64_t id = 0;
  std::string file_name;
  std::size_t width = 0;
  std::size_t height = 0;
};

struct Annotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  PoseInstance pose;
  /// Head segment length for PCKh; 0 when the source has none.
  double head_size = 0.0;
};

struct Dataset {
  KeypointSchema schema;
  std::vector<ImageRecord> images;
  std::vector<Annotation> annotations;
  /// Directory the image file names are relative to.
  std::filesystem::path root;

  const ImageRecord& image(std::int64_t id) const {
    for (const auto& r : images)
      if (r.id == id) return r;
    throw DatasetError("no image with id " + std::to_string(id));
  }
};

namespace detail {

// Portable draws: the standard distributions are implementation-defined.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double json_number(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw DatasetError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

/// Reads the annotation layout. Errors name the offending entry.
inline Dataset parse_annotations(const nlohmann::json& j,
                                 const KeypointSchema& fallback =
                                     KeypointSchema::stick5()) {
  using detail::json_number;
  if (!j.is_object()) throw DatasetError("annotation root must be an object");
  Dataset ds;
  ds.schema = fallback;
  if (j.contains("keypoints")) {
    ds.schema.names = j.at("keypoints").get<std::vector<std::string>>();
    ds.schema.pair_map.resize(ds.schema.names.size());
    for (std::size_t i = 0; i < ds.schema.pair_map.size(); ++i)
      ds.schema.pair_map[i] = i;
    for (const auto& p : j.value("flip_pairs", nlohmann::json::array())) {
      const auto a = p.at(0).get<std::size_t>(), b = p.at(1).get<std::size_t>();
      if (a >= ds.schema.size() || b >= ds.schema.size())
        throw DatasetError("flip pair index out of range");
      ds.schema.pair_map[a] = b;
      ds.schema.pair_map[b] = a;
    }
    ds.schema.sigmas = j.value("sigmas", std::vector<double>(
                                             ds.schema.size(), 0.05));
  }
  ds.schema.validate();
  const std::size_t N = ds.schema.size();

  std::map<std::int64_t, std::size_t> image_index;
  const auto& images = j.value("images", nlohmann::json::array());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = "images[" + std::to_string(i) + "]";
    const auto& e = images[i];
    try {
      ImageRecord r{e.at("id").get<std::int64_t>(),
                    e.at("file_name").get<std::string>(),
                    e.at("width").get<std::size_t>(),
                    e.at("height").get<std::size_t>()};
      if (!image_index.emplace(r.id, ds.images.size()).second)
        throw DatasetError(where + ": duplicate id " + std::to_string(r.id));
      ds.images.push_back(std::move(r));
    } catch (const nlohmann::json::exception& ex) {
      throw DatasetError(where + ": " + ex.what());
    }
  }

  const auto& anns = j.value("annotations", nlohmann::json::array());
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = "annotations[" + std::to_string(i) + "]";
    const auto& e = anns[i];
    try {
      Annotation a;
      a.id = e.value("id", static_cast<std::int64_t>(i));
      a.image_id = e.at("image_id").get<std::int64_t>();
      if (!image_index.count(a.image_id)) {
        throw DatasetError(where + ": image_id " + std::to_string(a.image_id) +
                           " references no image");
      }
      const auto& kp = e.at("keypoints");
      if (!kp.is_array() || kp.size() != 3 * N) {
        throw DatasetError(where + ".keypoints: expected " +
                           std::to_string(3 * N) + " numbers (3 x " +
                           std::to_string(N) + " keypoints), got " +
                           std::to_string(kp.is_array() ? kp.size() : 0));
      }
      a.pose.keypoints.resize(N);
      for (std::size_t k = 0; k < N; ++k) {
        const std::string kw = where + ".keypoints[" + std::to_string(3 * k);
        a.pose.keypoints[k].x = json_number(kp[3 * k], kw + "]");
        a.pose.keypoints[k].y = json_number(kp[3 * k + 1], kw + "+1]");
        const double v = json_number(kp[3 * k + 2], kw + "+2]");
        if (v != 0.0 && v != 1.0 && v != 2.0)
          throw DatasetError(kw + "+2]: visibility must be 0, 1 or 2");
        a.pose.keypoints[k].visibility = static_cast<int>(v);
      }
      const auto& bb = e.at("bbox");
      if (!bb.is_array() || bb.size() != 4)
        throw DatasetError(where + ".bbox: expected 4 numbers");
      for (std::size_t b = 0; b < 4; ++b)
        a.pose.bbox[b] = json_number(bb[b], where + ".bbox");
      a.pose.area = json_number(e.at("area"), where + ".area");
      if (a.pose.area < 0.0) throw DatasetError(where + ".area: negative");
      if (e.contains("head_size"))
        a.head_size = json_number(e.at("head_size"), where + ".head_size");
      ds.annotations.push_back(std::move(a));
    } catch (const nlohmann::json::exception& ex) {
      throw DatasetError(where + ": " + ex.what());
    }
  }
  return ds;
}

inline Dataset load_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DatasetError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(path.string() + ": parse error at byte " +
                       std::to_string(e.byte) + ": " + e.what());
  }
  Dataset ds = parse_annotations(j);
  ds.root = path.parent_path();
  return ds;
}

inline nlohmann::json to_json(const Dataset& ds) {
  nlohmann::json j;
  j["keypoints"] = ds.schema.names;
  j["flip_pairs"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.schema.size(); ++i)
    if (ds.schema.pair_map[i] > i)
      j["flip_pairs"].push_back({i, ds.schema.pair_map[i]});
  j["sigmas"] = ds.schema.sigmas;
  j["images"] = nlohmann::json::array();
  for (const auto& r : ds.images)
    j["images"].push_back({{"id", r.id},
                           {"file_name", r.file_name},
                           {"width", r.width},
                           {"height", r.height}});
  j["annotations"] = nlohmann::json::array();
  for (const auto& a : ds.annotations) {
    nlohmann::json kp = nlohmann::json::array();
    for (const auto& k : a.pose.keypoints) {
      kp.push_back(k.x);
      kp.push_back(k.y);
      kp.push_back(k.visibility);
    }
    j["annotations"].push_back({{"id", a.id},
                                {"image_id", a.image_id},
                                {"keypoints", kp},
                                {"bbox", a.pose.bbox},
                                {"area", a.pose.area},
                                {"head_size", a.head_size}});
  }
  return j;
}

inline void save_annotations(const std::filesystem::path& path,
                             const Dataset& ds) {
  std::ofstream os(path);
  if (!os) throw DatasetError("cannot write " + path.string());
  os << to_json(ds).dump(1) << '\n';
  if (!os) throw DatasetError("short write to " + path.string());
}

/// An image with its single annotated figure.
struct Sample {
  GrayImage image;
  Annotation annotation;
};

namespace detail {

struct Segment {
  double x0, y0, x1, y1, radius;
};

inline double segment_distance(const Segment& s, double px, double py) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (s.x0 + t * dx), py - (s.y0 + t * dy));
}

}  // namespace detail

/// Renders one stick figure (head, torso, two-segment arms and legs) over a
/// noisy background. Keypoints: head centre, hand and foot tips.
inline Sample render_stick_figure(std::mt19937_64& rng, std::size_t width,
                                  std::size_t height) {
  using detail::uniform;
  const double W = static_cast<double>(width), H = static_cast<double>(height);
  const double u = std::min(W, H) / 64.0;  // geometry is authored at 64 px
  const double margin = 2.0 * u;

  for (;;) {
    const double s = uniform(rng, 0.85, 1.15) * u;
    const double hip_x = uniform(rng, 0.40, 0.60) * W;
    const double hip_y = uniform(rng, 0.47, 0.59) * H;
    const double lean = uniform(rng, -0.25, 0.25);
    const double neck_x = hip_x + 14.0 * s * std::sin(lean);
    const double neck_y = hip_y - 14.0 * s * std::cos(lean);
    const double head_r = 3.5 * s;
    const double head_x = neck_x + 5.0 * s * std::sin(lean);
    const double head_y = neck_y - 5.0 * s * std::cos(lean);

    struct Limb {
      double jx, jy, ex, ey;
    };
    // side = +1 draws toward +x (figure's left).
    auto arm = [&](double side) {
      const double a = uniform(rng, -1.0, 1.2);
      const double b = a + uniform(rng, -0.8, 0.8);
      const double ex = neck_x + side * 8.0 * s * std::cos(a);
      const double ey = neck_y + 8.0 * s * std::sin(a);
      return Limb{ex, ey, ex + side * 7.0 * s * std::cos(b),
                  ey + 7.0 * s * std::sin(b)};
    };
    auto leg = [&](double side) {
      const double a = uniform(rng, 0.1, 0.6);
      const double b = a + uniform(rng, -0.4, 0.4);
      const double kx = hip_x + side * 10.0 * s * std::sin(a);
      const double ky = hip_y + 10.0 * s * std::cos(a);
      return Limb{kx, ky, kx + side * 9.0 * s * std::sin(b),
                  ky + 9.0 * s * std::cos(b)};
    };
    const Limb left_arm = arm(+1.0), right_arm = arm(-1.0);
    const Limb left_leg = leg(+1.0), right_leg = leg(-1.0);

    const double background = uniform(rng, 0.05, 0.30);
    const double gx = uniform(rng, -0.1, 0.1), gy = uniform(rng, -0.1, 0.1);
    const double ink = uniform(rng, 0.75, 0.95);

    const double pts[5][2] = {{head_x, head_y},
                              {left_arm.ex, left_arm.ey},
                              {right_arm.ex, right_arm.ey},
                              {left_leg.ex, left_leg.ey},
                              {right_leg.ex, right_leg.ey}};
    bool inside = head_y - head_r >= margin;
    for (const auto& p : pts)
      inside = inside && p[0] >= margin && p[0] <= W - 1 - margin &&
               p[1] >= margin && p[1] <= H - 1 - margin;
    if (!inside) continue;

    const double limb = 1.1 * s, tip = 1.8 * s;
    std::vector<detail::Segment> segs = {
        {hip_x, hip_y, neck_x, neck_y, limb},
        {neck_x, neck_y, head_x, head_y, limb},
        {head_x, head_y, head_x, head_y, head_r}};
    for (const Limb* l : {&left_arm, &right_arm}) {
      segs.push_back({neck_x, neck_y, l->jx, l->jy, limb});
      segs.push_back({l->jx, l->jy, l->ex, l->ey, limb});
      segs.push_back({l->ex, l->ey, l->ex, l->ey, tip});
    }
    for (const Limb* l : {&left_leg, &right_leg}) {
      segs.push_back({hip_x, hip_y, l->jx, l->jy, limb});
      segs.push_back({l->jx, l->jy, l->ex, l->ey, limb});
      segs.push_back({l->ex, l->ey, l->ex, l->ey, tip});
    }

    Sample out;
    out.image = GrayImage(width, height);
    double x_lo = W, x_hi = 0.0, y_lo = H, y_hi = 0.0;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double px = static_cast<double>(x), py = static_cast<double>(y);
        double cover = 0.0;
        for (const auto& sg : segs) {
          const double d = detail::segment_distance(sg, px, py);
          cover = std::max(cover, std::clamp(sg.radius + 0.5 - d, 0.0, 1.0));
        }
        const double bg = background + gx * (px / W - 0.5) +
                          gy * (py / H - 0.5) + uniform(rng, -0.06, 0.06);
        out.image.at(y, x) =
            static_cast<float>(std::clamp(bg + cover * (ink - bg), 0.0, 1.0));
        if (cover > 0.0) {
          x_lo = std::min(x_lo, px);
          x_hi = std::max(x_hi, px);
          y_lo = std::min(y_lo, py);
          y_hi = std::max(y_hi, py);
        }
      }
    }

    auto& a = out.annotation;
    a.pose.keypoints.resize(5);
    for (std::size_t k = 0; k < 5; ++k)
      a.pose.keypoints[k] = Keypoint{pts[k][0], pts[k][1], 2};
    a.pose.bbox = {x_lo, y_lo, x_hi - x_lo + 1.0, y_hi - y_lo + 1.0};
    a.pose.area = a.pose.bbox[2] * a.pose.bbox[3];
    // Benchmark rule: 0.6 x diagonal of the head box.
    a.head_size = 0.6 * 2.0 * std::sqrt(2.0) * head_r;
    return out;
  }
}

/// Renders count figures from one seed. Image ids and file names follow the
/// sample index.
inline std::vector<Sample> synthesize(std::size_t count, std::size_t width,
                                      std::size_t height, std::uint64_t seed) {
  if (count == 0) throw DatasetError("synthesize: count must be > 0");
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(render_stick_figure(rng, width, height));
    out.back().annotation.id = static_cast<std::int64_t>(i);
    out.back().annotation.image_id = static_cast<std::int64_t>(i);
  }
  return out;
}

inline std::string image_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu.pgm", index);
  return buf;
}

/// Writes images/NNNNNN.pgm and annotations.json under dir.
inline Dataset gen_synthetic_dataset(const std::filesystem::path& dir,
                                     std::size_t count, std::size_t width,
                                     std::size_t height, std::uint64_t seed) {
  const auto samples = synthesize(count, width, height, seed);
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  if (ec) throw DatasetError("cannot create " + dir.string() + ": " + ec.message());
  Dataset ds;
  ds.schema = KeypointSchema::stick5();
  ds.root = dir;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto name = image_file_name(i);
    write_pgm(dir / name, samples[i].image);
    ds.images.push_back({static_cast<std::int64_t>(i), name, width, height});
    ds.annotations.push_back(samples[i].annotation);
  }
  save_annotations(dir / "annotations.json", ds);
  return ds;
}

/// Loads every annotated image of a dataset into memory. Images with several
/// annotations yield one sample per annotation.
inline std::vector<Sample> load_samples(const Dataset& ds) {
  std::map<std::int64_t, GrayImage> cache;
  std::vector<Sample> out;
  for (const auto& a : ds.annotations) {
    auto it = cache.find(a.image_id);
    if (it == cache.end()) {
      const auto& rec = ds.image(a.image_id);
      GrayImage img = read_pgm(ds.root / rec.file_name);
      if (img.width != rec.width || img.height != rec.height) {
        throw DatasetError(rec.file_name + ": extent " +
                           std::to_string(img.width) + "x" +
                           std::to_string(img.height) +
                           " differs from the annotation");
      }
      it = cache.emplace(a.image_id, std::move(img)).first;
    }
    out.push_back({it->second, a});
  }
  return out;
}

/// Applies the 8-bit quantisation of the on-disk format, so in-memory data
/// trains identically to data read back from disk.
inline void quantize_in_place(std::vector<Sample>& samples) {
  for (auto& s : samples)
    for (auto& p : s.image.pixels)
      p = static_cast<float>(quantize(p)) / 255.0f;
}

}  // namespace fasterpose
