#include "ctiunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "ctiunet/augment.hpp"
#include "ctiunet/errors.hpp"
#include "ctiunet/hashing.hpp"
#include "ctiunet/image_io.hpp"

namespace fs = std::filesystem;

namespace ctiunet {
namespace {

struct ConditionNames {
  Condition condition;
  std::string_view label;
  std::string_view dir;
};

constexpr ConditionNames kConditionNames[] = {
    {Condition::k56Nx, "5/6Nx", "56Nx"},
    {Condition::kDN, "DN", "DN"},
    {Condition::kNEP25, "NEP25", "NEP25"},
    {Condition::kNormal, "Normal", "normal"},
    {Condition::kSynthetic, "Synthetic", "synthetic"},
};

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += "\n  " + l;
  return out;
}

std::vector<std::uint8_t> quantize(const Tensor4& t) {
  std::vector<std::uint8_t> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(t[i], 0.0, 1.0) * 255.0));
  return out;
}

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t split_rank(std::uint64_t seed, const std::string& id) {
  const std::string h = sha256_hex(std::to_string(seed) + "/" + id);
  return std::stoull(h.substr(0, 16), nullptr, 16);
}

}  // namespace

std::string_view condition_label(Condition c) {
  for (const auto& n : kConditionNames)
    if (n.condition == c) return n.label;
  return "?";
}

std::string_view condition_dir(Condition c) {
  for (const auto& n : kConditionNames)
    if (n.condition == c) return n.dir;
  return "?";
}

std::optional<Condition> parse_condition(std::string_view text) {
  for (const auto& n : kConditionNames)
    if (n.label == text || n.dir == text) return n.condition;
  return std::nullopt;
}

DatasetLoadError::DatasetLoadError(std::vector<std::string> errors)
    : std::runtime_error("dataset load failed with " +
                         std::to_string(errors.size()) + " error(s):" +
                         join_lines(errors)),
      errors_(std::move(errors)) {}

Dataset load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) {
    throw DatasetLoadError({"dataset root " + root.string() + " is not a directory"});
  }
  std::vector<std::string> errors;
  Dataset ds;
  ds.root = root;

  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  for (const fs::path& dir : dirs) {
    const auto condition = parse_condition(dir.filename().string());
    if (!condition) {
      errors.push_back(dir.string() + ": unknown condition directory");
      continue;
    }
    std::map<std::string, fs::path> images, masks;
    for (const auto& p : png_files(dir / "img")) images[p.stem().string()] = p;
    for (const auto& p : png_files(dir / "mask")) masks[p.stem().string()] = p;
    for (const auto& [id, p] : images)
      if (!masks.count(id)) errors.push_back(p.string() + ": orphan image (no mask)");
    for (const auto& [id, p] : masks)
      if (!images.count(id)) errors.push_back(p.string() + ": orphan mask (no image)");

    for (const auto& [id, img_path] : images) {
      auto mit = masks.find(id);
      if (mit == masks.end()) continue;
      try {
        const Image8 img = read_png(img_path);
        const Image8 mask = read_png(mit->second);
        bool ok = true;
        if (img.channels != 3) {
          errors.push_back(img_path.string() + ": image must be RGB");
          ok = false;
        }
        if (mask.channels != 1) {
          errors.push_back(mit->second.string() + ": mask must be single-channel");
          ok = false;
        }
        if (img.width != mask.width || img.height != mask.height) {
          errors.push_back(mit->second.string() + ": size mismatch with image");
          ok = false;
        }
        const auto bad = std::find_if(mask.pixels.begin(), mask.pixels.end(),
                                      [](std::uint8_t v) { return v != 0 && v != 255; });
        if (bad != mask.pixels.end()) {
          errors.push_back(mit->second.string() + ": non-binary mask value " +
                           std::to_string(*bad));
          ok = false;
        }
        if (!ok) continue;
        Sample s;
        s.image = image_to_tensor(img);
        s.mask = image_to_tensor(mask);
        s.condition = *condition;
        s.id = id;
        ds.samples.push_back(std::move(s));
      } catch (const LoadError& e) {
        errors.push_back(e.what());
      }
    }
  }
  if (errors.empty()) {
    try {
      finalize_dataset(ds);
    } catch (const ValidationError& e) {
      errors.push_back(e.what());
    }
  }
  if (!errors.empty()) throw DatasetLoadError(std::move(errors));
  return ds;
}

std::string sample_content_hash(const Sample& sample) {
  const auto img = quantize(sample.image);
  const auto mask = quantize(sample.mask);
  std::string bytes(img.begin(), img.end());
  bytes.append(mask.begin(), mask.end());
  return sha256_hex(bytes);
}

std::string manifest_text(const Dataset& dataset) {
  std::string out = "id\tcondition\timage\tmask\tsha256\n";
  for (const Sample& s : dataset.samples) {
    const std::string dir(condition_dir(s.condition));
    out += s.id + "\t" + std::string(condition_label(s.condition)) + "\t" + dir +
           "/img/" + s.id + ".png\t" + dir + "/mask/" + s.id + ".png\t" +
           sample_content_hash(s) + "\n";
  }
  return out;
}

void finalize_dataset(Dataset& dataset) {
  std::sort(dataset.samples.begin(), dataset.samples.end(),
            [](const Sample& a, const Sample& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < dataset.samples.size(); ++i) {
    if (dataset.samples[i].id == dataset.samples[i - 1].id) {
      throw ValidationError("duplicate sample identifier '" +
                            dataset.samples[i].id + "'");
    }
  }
  dataset.manifest_hash = sha256_hex(manifest_text(dataset));
}

void write_dataset(const Dataset& dataset, const fs::path& root,
                   const std::map<std::string, std::string>& text) {
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw ConfigError("cannot create " + root.string() + ": " + ec.message());
  for (const Sample& s : dataset.samples) {
    const fs::path dir = root / std::string(condition_dir(s.condition));
    fs::create_directories(dir / "img", ec);
    fs::create_directories(dir / "mask", ec);
    if (ec) throw ConfigError("cannot create " + dir.string() + ": " + ec.message());
    Image8 img = tensor_to_image(s.image);
    Image8 mask = tensor_to_image(s.mask);
    img.text = text;
    mask.text = text;
    write_png(dir / "img" / (s.id + ".png"), img);
    write_png(dir / "mask" / (s.id + ".png"), mask);
  }
  const fs::path manifest = root / "manifest.tsv";
  const fs::path tmp = root / "manifest.tsv.tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os << manifest_text(dataset);
    if (!os) throw ConfigError("short write to " + tmp.string());
  }
  fs::rename(tmp, manifest);
}

Tensor4 normalize(const Tensor4& image) {
  const Shape s = image.shape();
  Tensor4 out(s);
  const double m = static_cast<double>(s.plane());
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c) {
      auto p = image.plane(n, c);
      auto o = out.plane(n, c);
      const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
      if (p.empty() || *lo == *hi) continue;  // constant channel -> zeros
      double mean = 0.0;
      for (double v : p) mean += v;
      mean /= m;
      double var = 0.0;
      for (double v : p) var += (v - mean) * (v - mean);
      const double sd = std::max(std::sqrt(var / m), 1e-6);
      for (std::size_t i = 0; i < p.size(); ++i) o[i] = (p[i] - mean) / sd;
    }
  return out;
}

Tensor4 to_grayscale(const Tensor4& image) {
  const Shape s = image.shape();
  if (s.c != 3) {
    throw ValidationError("to_grayscale expects 3 channels, got " + s.str());
  }
  Tensor4 out({s.n, 1, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    auto r = image.plane(n, 0);
    auto g = image.plane(n, 1);
    auto b = image.plane(n, 2);
    auto o = out.plane(n, 0);
    for (std::size_t i = 0; i < o.size(); ++i)
      o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec) {
  if (!(spec.train_fraction >= 0.0 && spec.train_fraction <= 1.0)) {
    throw ConfigError("train fraction must lie in [0, 1]");
  }
  Dataset train, val;
  train.root = val.root = dataset.root;
  for (Condition c : kAllConditions) {
    std::vector<std::pair<std::uint64_t, const Sample*>> ranked;
    for (const Sample& s : dataset.samples)
      if (s.condition == c) ranked.emplace_back(split_rank(spec.seed, s.id), &s);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
    });
    const auto n_train = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(ranked.size()) + 1e-9));
    for (std::size_t i = 0; i < ranked.size(); ++i)
      (i < n_train ? train : val).samples.push_back(*ranked[i].second);
  }
  finalize_dataset(train);
  finalize_dataset(val);
  return {std::move(train), std::move(val)};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  Dataset ds;
  const std::size_t n = spec.size;
  const double nd = static_cast<double>(n);
  const double d = std::clamp(spec.difficulty, 0.0, 1.0);
  for (std::size_t k = 0; k < spec.count; ++k) {
    std::mt19937_64 rng(derive_seed(spec.seed, k, 0x5eed));
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto uni = [&](double a, double b) { return a + (b - a) * u01(rng); };
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Stain-like background: pale pink with low-frequency texture.
    const double bg[3] = {uni(0.88, 0.96), uni(0.70, 0.80), uni(0.80, 0.88)};
    struct Wave { double fy, fx, phase, amp; };
    std::vector<Wave> waves(4);
    for (auto& w : waves)
      w = {uni(1.0, 6.0) / nd, uni(1.0, 6.0) / nd, uni(0.0, 2 * std::numbers::pi),
           uni(0.5, 1.0) * (0.02 + 0.05 * d)};
    const double pixel_noise = 0.01 + 0.03 * d;

    struct Ellipse { double cy, cx, a, b, cos_t, sin_t; double color[3]; };
    const int blobs = std::uniform_int_distribution<int>(1, 5)(rng);
    std::vector<Ellipse> ellipses;
    for (int i = 0; i < blobs; ++i) {
      Ellipse e{};
      e.cy = uni(0.15, 0.85) * nd;
      e.cx = uni(0.15, 0.85) * nd;
      e.a = uni(0.07, 0.16) * nd;
      e.b = uni(0.07, 0.16) * nd;
      const double t = uni(0.0, std::numbers::pi);
      e.cos_t = std::cos(t);
      e.sin_t = std::sin(t);
      e.color[0] = uni(0.45, 0.62);
      e.color[1] = uni(0.18, 0.32);
      e.color[2] = uni(0.50, 0.68);
      ellipses.push_back(e);
    }
    // Small stained debris, roughly blob-coloured but much smaller.
    struct Speck { double cy, cx, r; };
    std::vector<Speck> specks(static_cast<std::size_t>(std::lround(8.0 * d)));
    for (auto& s : specks) s = {uni(0.0, nd), uni(0.0, nd), uni(0.8, 1.8)};
    const double softness = 0.4 + 1.2 * d;

    Sample s;
    s.image = Tensor4({1, 3, n, n});
    s.mask = Tensor4({1, 1, n, n});
    s.condition = spec.condition;
    s.id = "syn_" + std::to_string(spec.seed) + "_" +
           std::string(5 - std::min<std::size_t>(5, std::to_string(k).size()), '0') +
           std::to_string(k);
    for (std::size_t y = 0; y < n; ++y) {
      for (std::size_t x = 0; x < n; ++x) {
        const double py = static_cast<double>(y);
        const double px = static_cast<double>(x);
        double texture = 0.0;
        for (const auto& w : waves)
          texture += w.amp * std::sin(2 * std::numbers::pi * (w.fy * py + w.fx * px) + w.phase);
        double rgb[3];
        for (int c = 0; c < 3; ++c) rgb[c] = bg[c] + texture;

        for (const auto& sp : specks) {
          const double r = std::hypot(py - sp.cy, px - sp.cx);
          const double alpha = 0.6 / (1.0 + std::exp((r - sp.r) / 0.5));
          for (int c = 0; c < 3; ++c) rgb[c] += alpha * (0.55 - rgb[c]);
        }
        bool inside = false;
        for (const auto& e : ellipses) {
          const double dy = py - e.cy;
          const double dx = px - e.cx;
          const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
          const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
          const double rho = std::sqrt(u * u + v * v);
          inside = inside || rho <= 1.0;
          // Approximate signed distance in pixels; alpha = 0.5 on the rim.
          const double dist = (rho - 1.0) * std::min(e.a, e.b);
          const double alpha = 1.0 / (1.0 + std::exp(dist / softness));
          for (int c = 0; c < 3; ++c)
            rgb[c] += alpha * (e.color[c] + 0.5 * texture - rgb[c]);
        }
        for (int c = 0; c < 3; ++c) {
          const double v = rgb[c] + pixel_noise * gauss(rng);
          s.image.at(0, static_cast<std::size_t>(c), y, x) =
              std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
        s.mask.at(0, 0, y, x) = inside ? 1.0 : 0.0;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  finalize_dataset(ds);
  return ds;
}

}  // namespace ctiunet
