#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ctiunet/autograd.hpp"

namespace ctiunet {

struct UNetConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 1;
  std::vector<std::size_t> encoder_channels{16, 32, 64, 128};
  std::size_t kernel_size = 3;

  std::size_t depth() const { return encoder_channels.size(); }
  // Input height and width must be multiples of this.
  std::size_t spatial_factor() const;
  void validate() const;

  // Canonical key=value lines, one per field, LF terminated.
  std::string to_text() const;
  bool operator==(const UNetConfig&) const = default;
};

// Encoder/decoder network with skip connections. Each encoder level holds
// two conv+norm+relu blocks, the first of which downsamples with stride 2 on
// every level but the top. Decoder levels upsample (nearest), convolve,
// concatenate the matching encoder output, then apply two conv blocks. A
// 1x1 convolution produces logits.
class UNetModel {
 public:
  static UNetModel build(const UNetConfig& config, std::uint64_t seed);

  UNetModel(const UNetModel& other);
  UNetModel& operator=(const UNetModel& other);
  UNetModel(UNetModel&&) noexcept = default;
  UNetModel& operator=(UNetModel&&) noexcept = default;

  const UNetConfig& config() const { return config_; }

  // Parameters in construction order; pointers stay valid for the model's
  // lifetime.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& parameter(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  std::size_t parameter_count() const;

  // Logits with gradients flowing into this model's parameters.
  Value forward(Tape& tape, Value batch);
  // Logits of a frozen model.
  Tensor4 forward(const Tensor4& batch) const;
  // Sigmoid of forward().
  Tensor4 predict(const Tensor4& batch) const;

  // Rounds every parameter to the nearest binary32 value, which is the
  // checkpoint precision.
  void round_to_storage_precision();

  // Free-form key/value annotations carried through checkpoints (e.g. the
  // run config hash).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const {
    return metadata_;
  }

 private:
  UNetModel() = default;
  void check_input(const Shape& s) const;
  template <typename ParamFn>
  Value forward_impl(Tape& tape, Value batch, ParamFn&& param) const;

  UNetConfig config_;
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::string> metadata_;

  friend UNetModel deserialize_model(const std::string& bytes);
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

// Writes to a sibling temporary file and renames it into place.
void save_model(const UNetModel& model, const std::filesystem::path& path);
// Throws LoadError; never returns a partially populated model.
UNetModel load_model(const std::filesystem::path& path);

std::string serialize_model(const UNetModel& model);
UNetModel deserialize_model(const std::string& bytes);

}  // namespace ctiunet
