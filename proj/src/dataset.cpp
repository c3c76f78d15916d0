/* Copyright 2026 The cashew-edge Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "cashew/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "cashew/errors.hpp"
#include "cashew/random.hpp"

namespace cashew {

namespace fs = std::filesystem;

namespace {

// Reads the next whitespace-separated header token, skipping '#' comments.
std::string ppm_token(std::istream& in, const fs::path& path) {
  std::string tok;
  for (int c; (c = in.get()) != EOF;) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw IoError("truncated PPM header in " + path.string());
  return tok;
}

int ppm_int(std::istream& in, const fs::path& path) {
  const std::string t = ppm_token(in, path);
  if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(c); }) ||
      t.size() > 6) {
    throw IoError("bad PPM header field '" + t + "' in " + path.string());
  }
  return std::stoi(t);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> f;
  std::size_t start = 0;
  for (std::size_t tab; (tab = line.find('\t', start)) != std::string::npos; start = tab + 1) {
    f.push_back(line.substr(start, tab - start));
  }
  f.push_back(line.substr(start));
  return f;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Smooth value noise on a coarse lattice, bilinearly interpolated.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int size, int cells) : cells_(cells), step_(double(size) / cells) {
    lattice_.resize(static_cast<std::size_t>(cells + 1) * (cells + 1));
    for (double& v : lattice_) v = rng.uniform(-1.0, 1.0);
  }
  double at(int x, int y) const {
    const double fx = x / step_, fy = y / step_;
    const int x0 = std::min(static_cast<int>(fx), cells_ - 1);
    const int y0 = std::min(static_cast<int>(fy), cells_ - 1);
    const double tx = fx - x0, ty = fy - y0;
    const auto l = [&](int i, int j) { return lattice_[static_cast<std::size_t>(j) * (cells_ + 1) + i]; };
    const double top = std::lerp(l(x0, y0), l(x0 + 1, y0), tx);
    const double bot = std::lerp(l(x0, y0 + 1), l(x0 + 1, y0 + 1), tx);
    return std::lerp(top, bot, ty);
  }

 private:
  int cells_;
  double step_;
  std::vector<double> lattice_;
};

std::string index_name(const std::string& label, std::uint64_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%04llu.ppm", static_cast<unsigned long long>(i));
  return label + buf;
}

}  // namespace

void write_ppm(const RgbImage& image, const fs::path& path) {
  if (image.width < 1 || image.height < 1 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw ContractError("image buffer does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

RgbImage read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  if (ppm_token(in, path) != "P6") throw IoError(path.string() + " is not a binary PPM (P6)");
  RgbImage img;
  img.width = ppm_int(in, path);
  img.height = ppm_int(in, path);
  const int maxval = ppm_int(in, path);
  if (img.width < 1 || img.height < 1) throw IoError("PPM with empty raster: " + path.string());
  if (maxval != 255) throw IoError("only maxval 255 PPM is supported: " + path.string());
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw IoError("truncated PPM raster in " + path.string());
  }
  return img;
}

Tensor image_to_tensor(const RgbImage& image) {
  std::vector<float> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(image.pixels[i] / 127.5 - 1.0);
  }
  return Tensor(Shape{1, image.height, image.width, 3}, std::move(v));
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 2 && f.size() != 4) {
      throw IoError(path.string() + ":" + std::to_string(line_no) +
                    ": expected path, label and optional latitude, longitude");
    }
    ManifestEntry e{f[0], f[1], std::nullopt};
    if (f.size() == 4) {
      try {
        e.geotag = GeoTag{std::stod(f[2]), std::stod(f[3])};
      } catch (const std::exception&) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad coordinates");
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[80];
  for (const auto& e : entries) {
    out << e.path << '\t' << e.label;
    if (e.geotag) {
      std::snprintf(buf, sizeof buf, "\t%.12f\t%.12f", e.geotag->latitude, e.geotag->longitude);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset load_dataset(const fs::path& manifest, const std::vector<std::string>& class_labels) {
  const auto entries = read_manifest(manifest);
  Dataset ds;
  if (class_labels.empty()) {
    std::set<std::string> seen;
    for (const auto& e : entries) seen.insert(e.label);
    ds.class_labels.assign(seen.begin(), seen.end());
  } else {
    ds.class_labels = class_labels;
  }
  const fs::path base = manifest.parent_path();
  for (const auto& e : entries) {
    const auto it = std::find(ds.class_labels.begin(), ds.class_labels.end(), e.label);
    if (it == ds.class_labels.end()) {
      throw ContractError("manifest label '" + e.label + "' is not a model class");
    }
    LabeledImage s;
    s.path = e.path;
    s.label = static_cast<int>(it - ds.class_labels.begin());
    s.image = image_to_tensor(read_ppm(base / e.path));
    ds.samples.push_back(std::move(s));
    ds.geotags.push_back(e.geotag);
  }
  return ds;
}

RgbImage synth_leaf(bool diseased, const SynthSpec& spec, std::uint64_t index) {
  const int n = spec.image_size;
  Rng rng(Rng::mix(Rng::mix(spec.seed, diseased ? 11 : 12), index));
  RgbImage img;
  img.width = img.height = n;
  img.pixels.resize(static_cast<std::size_t>(n) * n * 3);

  // Leaf base color and lighting vary per image.
  const double light = rng.uniform(0.8, 1.15);
  const double base_r = rng.uniform(45, 85), base_g = rng.uniform(120, 170),
               base_b = rng.uniform(30, 60);
  const ValueNoise coarse(rng, n, 4);
  const ValueNoise fine(rng, n, 12);
  // A faint midrib across the leaf.
  const double vein_angle = rng.uniform(0.0, std::numbers::pi);
  const double vx = std::cos(vein_angle), vy = std::sin(vein_angle);
  const double cx0 = n / 2.0 + rng.uniform(-8, 8), cy0 = n / 2.0 + rng.uniform(-8, 8);

  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double tex = 18.0 * coarse.at(x, y) + 8.0 * fine.at(x, y);
      const double dist = std::fabs((x - cx0) * vy - (y - cy0) * vx);
      const double vein = dist < 1.2 ? 25.0 : 0.0;
      const double grain = rng.uniform(-6, 6);
      std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * n + x) * 3];
      p[0] = to_byte(light * (base_r + 0.4 * tex + 0.6 * vein + grain));
      p[1] = to_byte(light * (base_g + tex + vein + grain));
      p[2] = to_byte(light * (base_b + 0.3 * tex + 0.3 * vein + grain));
    }
  }
  if (!diseased) return img;

  const int lesions = spec.min_lesions +
                      static_cast<int>(rng.below(spec.max_lesions - spec.min_lesions + 1));
  for (int k = 0; k < lesions; ++k) {
    const double cx = rng.uniform(0.1 * n, 0.9 * n), cy = rng.uniform(0.1 * n, 0.9 * n);
    const double ra = rng.uniform(spec.min_lesion_radius, spec.max_lesion_radius);
    const double rb = ra * rng.uniform(0.55, 1.0);
    const double th = rng.uniform(0.0, std::numbers::pi);
    const double c = std::cos(th), s = std::sin(th);
    // Dark necrotic core fading through a brown ring into the leaf.
    const double core_r = rng.uniform(55, 85), core_g = rng.uniform(30, 50),
                 core_b = rng.uniform(15, 30);
    const int x0 = std::max(0, static_cast<int>(cx - ra * 1.4) - 1);
    const int x1 = std::min(n - 1, static_cast<int>(cx + ra * 1.4) + 1);
    const int y0 = std::max(0, static_cast<int>(cy - ra * 1.4) - 1);
    const int y1 = std::min(n - 1, static_cast<int>(cy + ra * 1.4) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - cx, dy = y - cy;
        const double u = (dx * c + dy * s) / ra, v = (-dx * s + dy * c) / rb;
        const double r = std::sqrt(u * u + v * v);
        if (r > 1.35) continue;
        const double w = r <= 1.0 ? 1.0 : (1.35 - r) / 0.35;
        const double mottle = rng.uniform(-8, 8);
        std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * n + x) * 3];
        p[0] = to_byte(std::lerp(double(p[0]), light * (core_r + mottle), w));
        p[1] = to_byte(std::lerp(double(p[1]), light * (core_g + mottle), w));
        p[2] = to_byte(std::lerp(double(p[2]), light * (core_b + mottle), w));
      }
    }
  }
  return img;
}

std::vector<ManifestEntry> gen_synth(const SynthSpec& spec, const fs::path& out_dir) {
  if (spec.per_class < 1 || spec.image_size < 8) {
    throw ContractError("synthetic set needs >= 1 image per class and size >= 8");
  }
  if (spec.min_lesions < 1 || spec.max_lesions < spec.min_lesions ||
      !(spec.min_lesion_radius > 0.0) || spec.max_lesion_radius < spec.min_lesion_radius) {
    throw ContractError("lesion parameters must be positive and ordered");
  }
  const bool geo = spec.field_sw && spec.field_ne;
  if (geo && !(spec.field_ne->latitude > spec.field_sw->latitude &&
               spec.field_ne->longitude > spec.field_sw->longitude)) {
    throw ContractError("field corners are inverted");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  // Disease hotspots in normalized field coordinates.
  std::vector<std::pair<double, double>> hotspots;
  if (geo) {
    Rng h(Rng::mix(spec.seed, 21));
    for (int i = 0; i < 3; ++i) hotspots.emplace_back(h.uniform(0.15, 0.85), h.uniform(0.15, 0.85));
  }

  std::vector<ManifestEntry> entries;
  for (const std::string& label : synth_class_labels()) {
    const bool diseased = label == "anthracnose";
    fs::create_directories(out_dir / label, ec);
    if (ec) throw IoError("cannot create " + (out_dir / label).string() + ": " + ec.message());
    for (int i = 0; i < spec.per_class; ++i) {
      const std::string rel = label + "/" + index_name(label, static_cast<std::uint64_t>(i));
      write_ppm(synth_leaf(diseased, spec, static_cast<std::uint64_t>(i)), out_dir / rel);
      ManifestEntry e{rel, label, std::nullopt};
      if (geo) {
        Rng g(Rng::mix(Rng::mix(spec.seed, diseased ? 31 : 32), static_cast<std::uint64_t>(i)));
        double u, v;
        if (diseased) {
          const auto& hs = hotspots[g.below(hotspots.size())];
          u = std::clamp(hs.first + 0.08 * g.normal(), 0.0, 0.999);
          v = std::clamp(hs.second + 0.08 * g.normal(), 0.0, 0.999);
        } else {
          u = g.uniform();
          v = g.uniform();
        }
        e.geotag = GeoTag{
            std::lerp(spec.field_sw->latitude, spec.field_ne->latitude, v),
            std::lerp(spec.field_sw->longitude, spec.field_ne->longitude, u)};
      }
      entries.push_back(std::move(e));
    }
  }
  write_manifest(entries, out_dir / "manifest.tsv");
  return entries;
}

}  // namespace cashew
