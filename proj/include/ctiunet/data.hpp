#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ctiunet/tensor.hpp"

namespace ctiunet {

enum class Condition { k56Nx, kDN, kNEP25, kNormal, kSynthetic };

inline constexpr Condition kAllConditions[] = {
    Condition::k56Nx, Condition::kDN, Condition::kNEP25, Condition::kNormal,
    Condition::kSynthetic};

// Display label used in reports ("5/6Nx", "DN", "NEP25", "Normal",
// "Synthetic").
std::string_view condition_label(Condition c);
// Directory name in the on-disk layout ("56Nx", "DN", "NEP25", "normal",
// "synthetic").
std::string_view condition_dir(Condition c);
// Accepts either the label or the directory name.
std::optional<Condition> parse_condition(std::string_view text);

struct Sample {
  Tensor4 image;  // (1, 3, H, W) in [0, 1]
  Tensor4 mask;   // (1, 1, H, W) in {0, 1}
  Condition condition = Condition::kSynthetic;
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;  // sorted by id
  std::filesystem::path root;
  std::string manifest_hash;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

// Thrown by load_dataset with every per-file problem found.
class DatasetLoadError : public std::runtime_error {
 public:
  explicit DatasetLoadError(std::vector<std::string> errors);
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  std::vector<std::string> errors_;
};

// Reads <root>/<condition>/{img,mask}/<id>.png.
Dataset load_dataset(const std::filesystem::path& root);

// SHA-256 of a sample's 8-bit image and mask content.
std::string sample_content_hash(const Sample& sample);
// Tab-separated manifest: header, then one row per sample in id order.
std::string manifest_text(const Dataset& dataset);
// Writes PNGs, then manifest.tsv (atomically, last).
void write_dataset(const Dataset& dataset, const std::filesystem::path& root,
                   const std::map<std::string, std::string>& text = {});
// Sorts samples, checks identifier uniqueness and fills manifest_hash.
void finalize_dataset(Dataset& dataset);

// Per-channel zero mean / unit variance; constant channels become zero.
Tensor4 normalize(const Tensor4& image);
// Luminance 0.299 R + 0.587 G + 0.114 B of every batch item.
Tensor4 to_grayscale(const Tensor4& image);

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

// Stratified by condition; floor(train_fraction * n) training samples per
// condition. Within a condition, samples are ranked by a seeded hash of
// their identifier.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitSpec& spec);

struct SyntheticSpec {
  std::size_t count = 16;
  std::size_t size = 64;
  std::uint64_t seed = 0;
  // 0 = clean, 1 = cluttered background and soft edges.
  double difficulty = 0.5;
  Condition condition = Condition::kSynthetic;
};

// Pathology-like tiles: textured background with 1-5 soft-edged elliptical
// blobs; masks are the generating ellipses.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace ctiunet
