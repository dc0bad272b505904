#pragma once

// Synthetic thin-cloud pairs, on-disk datasets and the train/test split.
//
// A cloudy image is an alpha composite of a procedural clear image and a
// near-white tint: cloudy = (1 - a) * clear + a * tint, with a a smooth
// multi-octave value-noise field scaled to [0, a_max].

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mlagan/error.hpp"
#include "mlagan/image_io.hpp"
#include "mlagan/random.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan {

template <typename T>
struct ImagePair {
  Tensor<T> cloudy;
  Tensor<T> clear;
  std::string id;
};

template <typename T>
struct Split {
  std::vector<ImagePair<T>> train;
  std::vector<ImagePair<T>> test;
};

struct CloudParams {
  std::size_t octaves = 3;
  double max_opacity = 0.9;
  std::array<double, 3> tint{0.95, 0.95, 0.95};
  std::uint64_t seed = 0;

  void validate() const {
    if (octaves == 0) throw ConfigError("cloud: octaves must be positive");
    if (!(max_opacity > 0.0 && max_opacity <= 1.0)) throw ConfigError("cloud: max opacity must be in (0, 1]");
    for (double t : tint)
      if (!(t >= 0.9 && t <= 1.0)) throw ConfigError("cloud: tint components must be in [0.9, 1]");
  }
};

namespace detail {

inline double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

/// Value noise on a (cells+1)^2 lattice, smoothstep-interpolated to side x side.
inline std::vector<double> value_noise(std::size_t side, std::size_t cells, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t g = cells + 1;
  std::vector<double> lattice(g * g);
  for (auto& v : lattice) v = u(rng);
  std::vector<double> out(side * side);
  for (std::size_t y = 0; y < side; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * static_cast<double>(cells) / static_cast<double>(side);
    const std::size_t y0 = std::min(static_cast<std::size_t>(fy), cells - 1);
    const double ty = smoothstep(fy - static_cast<double>(y0));
    for (std::size_t x = 0; x < side; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * static_cast<double>(cells) / static_cast<double>(side);
      const std::size_t x0 = std::min(static_cast<std::size_t>(fx), cells - 1);
      const double tx = smoothstep(fx - static_cast<double>(x0));
      const double a = lattice[y0 * g + x0], b = lattice[y0 * g + x0 + 1];
      const double c = lattice[(y0 + 1) * g + x0], d = lattice[(y0 + 1) * g + x0 + 1];
      out[y * side + x] = (a + (b - a) * tx) * (1 - ty) + (c + (d - c) * tx) * ty;
    }
  }
  return out;
}

inline void require_side(std::size_t side) {
  if (side < 8) throw ConfigError("synthetic images need side >= 8, got " + std::to_string(side));
}

}  // namespace detail

/// Procedural clear scene: colour gradient, soft checkerboard and low-pass noise, mixed
/// with seeded weights.
template <typename T = float>
Tensor<T> synth_clear_image(std::size_t side, std::uint64_t seed) {
  detail::require_side(side);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::array<double, 3> c0, c1, k0, k1;
  for (int c = 0; c < 3; ++c) {
    c0[c] = u(rng);
    c1[c] = u(rng);
    k0[c] = u(rng);
    k1[c] = u(rng);
  }
  const double angle = u(rng) * 2.0 * std::acos(-1.0);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const std::size_t period = 4 + static_cast<std::size_t>(u(rng) * static_cast<double>(side / 2));
  double wg = u(rng) + 0.2, wc = u(rng) * 0.6, wn = u(rng) + 0.2;
  const double total = wg + wc + wn;
  wg /= total;
  wc /= total;
  wn /= total;

  std::array<std::vector<double>, 3> noise;
  for (auto& n : noise) n = detail::value_noise(side, std::max<std::size_t>(2, side / 8), rng);

  Tensor<T> img({3, side, side});
  const double s = static_cast<double>(side - 1);
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      // projection onto the gradient direction, mapped to [0, 1]
      const double p = ((static_cast<double>(x) / s - 0.5) * dx + (static_cast<double>(y) / s - 0.5) * dy) /
                           std::sqrt(2.0) + 0.5;
      const bool odd = ((x / period) + (y / period)) % 2 == 1;
      for (std::size_t c = 0; c < 3; ++c) {
        const double grad = c0[c] + (c1[c] - c0[c]) * p;
        const double check = odd ? k1[c] : k0[c];
        const double v = wg * grad + wc * check + wn * noise[c][y * side + x];
        img[(c * side + y) * side + x] = static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

/// Multi-octave value noise rescaled so min == 0 and max == max_opacity exactly.
template <typename T = float>
Tensor<T> synth_cloud_field(std::size_t side, const CloudParams& p) {
  detail::require_side(side);
  p.validate();
  Rng rng(p.seed);
  std::vector<double> acc(side * side, 0.0);
  double amp = 1.0;
  std::size_t cells = 2;
  for (std::size_t o = 0; o < p.octaves; ++o) {
    const auto layer = detail::value_noise(side, cells, rng);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += amp * layer[i];
    amp *= 0.5;
    cells = std::min(cells * 2, side / 2);
  }
  const auto [lo, hi] = std::minmax_element(acc.begin(), acc.end());
  const double mn = *lo, range = *hi - *lo;
  Tensor<T> alpha({side, side});
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const double t = range > 0 ? (acc[i] - mn) / range : 0.0;
    alpha[i] = static_cast<T>(std::clamp(t * p.max_opacity, 0.0, p.max_opacity));
  }
  return alpha;
}

/// cloudy = (1 - a) clear + a tint, per channel.
template <typename T>
Tensor<T> apply_cloud(const Tensor<T>& clear, const Tensor<T>& alpha, const std::array<double, 3>& tint) {
  if (clear.rank() != 3 || clear.dim(0) != 3 || alpha.rank() != 2 || alpha.dim(0) != clear.dim(1) ||
      alpha.dim(1) != clear.dim(2)) {
    throw DimensionError("apply_cloud: clear " + shape_str(clear.shape()) + " vs alpha " +
                         shape_str(alpha.shape()));
  }
  const std::size_t plane = alpha.size();
  Tensor<T> out(clear.shape());
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const T a = alpha[i];
      const T v = (T{1} - a) * clear[c * plane + i] + a * static_cast<T>(tint[c]);
      out[c * plane + i] = std::clamp(v, T{0}, T{1});
    }
  }
  return out;
}

inline std::string pair_id(std::size_t index) {
  std::ostringstream os;
  os << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

/// One synthetic pair; every random choice derives from mix_seed(seed, index).
template <typename T = float>
ImagePair<T> synth_pair(std::size_t side, std::uint64_t seed, std::size_t index, double max_opacity = 0.9) {
  const std::uint64_t s = mix_seed(seed, index);
  Rng rng(s);
  std::uniform_real_distribution<double> tint(0.9, 1.0);
  CloudParams cp;
  cp.max_opacity = max_opacity;
  for (auto& t : cp.tint) t = tint(rng);
  cp.seed = mix_seed(s, 1);
  ImagePair<T> p;
  p.clear = synth_clear_image<T>(side, mix_seed(s, 0));
  p.cloudy = apply_cloud(p.clear, synth_cloud_field<T>(side, cp), cp.tint);
  p.id = pair_id(index);
  return p;
}

/// Test size is floor(n / 5); the rest trains. Membership is a seeded shuffle of indices.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                                   std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(mix_seed(seed, 0x5b11));
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_test = n / 5;
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {train, test};
}

template <typename T = float>
Split<T> make_dataset(std::size_t n, std::size_t side, std::uint64_t seed, double max_opacity = 0.9) {
  if (n < 5) throw ConfigError("dataset needs at least 5 pairs, got " + std::to_string(n));
  std::vector<ImagePair<T>> all;
  all.reserve(n);
  for (std::size_t i = 0; i < n; ++i) all.push_back(synth_pair<T>(side, seed, i, max_opacity));
  const auto [train, test] = split_indices(n, seed);
  Split<T> s;
  for (std::size_t i : train) s.train.push_back(all[i]);
  for (std::size_t i : test) s.test.push_back(all[i]);
  return s;
}

namespace detail {

inline void replace_file(const std::filesystem::path& tmp, const std::filesystem::path& dst) {
  std::error_code ec;
  std::filesystem::rename(tmp, dst, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + dst.string() + ": " + ec.message());
}

template <typename T>
void save_image_atomic(const Tensor<T>& img, const std::filesystem::path& path) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  save_image(img, tmp);
  replace_file(tmp, path);
}

}  // namespace detail

/// Writes <root>/cloud/<id>.png, <root>/label/<id>.png and manifest.csv (id,split).
template <typename T>
void write_dataset(const Split<T>& split, const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(root / "cloud", ec);
  fs::create_directories(root / "label", ec);
  if (!fs::is_directory(root / "cloud") || !fs::is_directory(root / "label")) {
    throw IoError("cannot create dataset directories under " + root.string());
  }
  std::vector<std::pair<std::string, const char*>> manifest;
  auto emit = [&](const std::vector<ImagePair<T>>& pairs, const char* tag) {
    for (const auto& p : pairs) {
      detail::save_image_atomic(p.cloudy, root / "cloud" / (p.id + ".png"));
      detail::save_image_atomic(p.clear, root / "label" / (p.id + ".png"));
      manifest.emplace_back(p.id, tag);
    }
  };
  emit(split.train, "train");
  emit(split.test, "test");
  std::sort(manifest.begin(), manifest.end());
  const fs::path tmp = root / "manifest.csv.tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("cannot write " + tmp.string());
    f << "id,split\n";
    for (const auto& [id, tag] : manifest) f << id << ',' << tag << '\n';
    if (!f) throw IoError("write failed for " + tmp.string());
  }
  detail::replace_file(tmp, root / "manifest.csv");
}

struct PairingReport {
  std::vector<std::string> unpaired;  // file names present on one side only
  std::vector<std::string> unreadable;
};

template <typename T = float>
struct LoadedPairs {
  Split<T> split;
  PairingReport report;
};

namespace detail {

inline std::set<std::string> png_names(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::set<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
  }
  return names;
}

inline std::map<std::string, std::string> read_manifest(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  std::ifstream f(path);
  if (!f) return out;
  std::string line;
  std::getline(f, line);
  if (line != "id,split") throw IoError("manifest " + path.string() + " has unexpected header '" + line + "'");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string tag = comma == std::string::npos ? "" : line.substr(comma + 1);
    if (tag != "train" && tag != "test") throw IoError("manifest " + path.string() + ": bad row '" + line + "'");
    out[line.substr(0, comma)] = tag;
  }
  return out;
}

}  // namespace detail

/// Pairs files by name across cloud_dir and label_dir. The split comes from a
/// manifest.csv next to the two directories when present, else from the seeded
/// 80/20 rule over the sorted ids. Unpaired or unreadable files abort unless
/// allow_skip is set, in which case they are listed in the report.
template <typename T = float>
LoadedPairs<T> load_paired_dir(const std::filesystem::path& cloud_dir, const std::filesystem::path& label_dir,
                               std::uint64_t seed = 0, bool allow_skip = false) {
  const auto clouds = detail::png_names(cloud_dir);
  const auto labels = detail::png_names(label_dir);
  LoadedPairs<T> out;
  std::vector<std::string> common;
  for (const auto& n : clouds) (labels.count(n) ? common : out.report.unpaired).push_back(n);
  for (const auto& n : labels)
    if (!clouds.count(n)) out.report.unpaired.push_back(n);

  std::vector<ImagePair<T>> pairs;
  for (const auto& name : common) {
    try {
      ImagePair<T> p{load_image<T>(cloud_dir / name), load_image<T>(label_dir / name),
                     std::filesystem::path(name).stem().string()};
      if (p.cloudy.shape() != p.clear.shape()) throw IoError("size mismatch");
      pairs.push_back(std::move(p));
    } catch (const IoError&) {
      out.report.unreadable.push_back(name);
    }
  }
  if (!allow_skip && (!out.report.unpaired.empty() || !out.report.unreadable.empty())) {
    std::string msg = "unpaired or unreadable files:";
    for (const auto& n : out.report.unpaired) msg += " " + n;
    for (const auto& n : out.report.unreadable) msg += " " + n;
    throw IoError(msg + " (pass --allow-skip to ignore)");
  }
  if (pairs.empty()) throw IoError("no image pairs found in " + cloud_dir.string());

  const auto manifest = detail::read_manifest(cloud_dir.parent_path() / "manifest.csv");
  if (!manifest.empty()) {
    for (auto& p : pairs) {
      const auto it = manifest.find(p.id);
      if (it == manifest.end()) throw IoError("pair " + p.id + " is missing from the manifest");
      (it->second == "test" ? out.split.test : out.split.train).push_back(std::move(p));
    }
  } else {
    if (pairs.size() < 5) throw IoError("need at least 5 pairs to split, found " + std::to_string(pairs.size()));
    const auto [train, test] = split_indices(pairs.size(), seed);
    for (std::size_t i : train) out.split.train.push_back(pairs[i]);
    for (std::size_t i : test) out.split.test.push_back(pairs[i]);
  }
  return out;
}

/// Loads a dataset written by write_dataset.
template <typename T = float>
LoadedPairs<T> load_dataset(const std::filesystem::path& root, bool allow_skip = false) {
  return load_paired_dir<T>(root / "cloud", root / "label", 0, allow_skip);
}

}  // namespace mlagan
