#include <cstring>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ctiunet/errors.hpp"
#include "ctiunet/unet.hpp"
#include "test_util.hpp"

namespace ctiunet {
namespace {

using testing::random_tensor;

UNetConfig small() { return {3, 1, {4, 8}, 3}; }

TEST(UNetConfigTest, Validation) {
  EXPECT_NO_THROW(small().validate());
  EXPECT_THROW((UNetConfig{0, 1, {4}, 3}).validate(), ConfigError);
  EXPECT_THROW((UNetConfig{3, 0, {4}, 3}).validate(), ConfigError);
  EXPECT_THROW((UNetConfig{3, 1, {}, 3}).validate(), ConfigError);
  EXPECT_THROW((UNetConfig{3, 1, {4, 0}, 3}).validate(), ConfigError);
  EXPECT_EQ((UNetConfig{3, 1, {16, 32, 64, 128}, 3}).spatial_factor(), 8u);
}

TEST(UNetBuildTest, ParameterTallyByHand) {
  // Encoder level 0: conv 3->4 (4*3*9) + norm (2*4) + conv 4->4 (4*4*9) + norm (2*4).
  const std::size_t enc0 = 108 + 8 + 144 + 8;
  // Encoder level 1: strided conv 4->8 + norm + conv 8->8 + norm.
  const std::size_t enc1 = 288 + 16 + 576 + 16;
  // Decoder level 0: up conv 8->4 + norm, conv 8->4 (after concat) + norm, conv 4->4 + norm.
  const std::size_t dec0 = 288 + 8 + 288 + 8 + 144 + 8;
  const std::size_t head = 4 + 1;
  EXPECT_EQ(UNetModel::build(small(), 0).parameter_count(), enc0 + enc1 + dec0 + head);
}

TEST(UNetBuildTest, DeeperHasMoreParameters) {
  EXPECT_GT(UNetModel::build({3, 1, {16, 32, 64}, 3}, 0).parameter_count(),
            UNetModel::build({3, 1, {16, 32}, 3}, 0).parameter_count());
}

TEST(UNetBuildTest, SameSeedSameParameters) {
  const UNetModel a = UNetModel::build(small(), 42);
  const UNetModel b = UNetModel::build(small(), 42);
  const UNetModel c = UNetModel::build(small(), 43);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
    differs = differs || !(pa[i]->value == pc[i]->value);
  }
  EXPECT_TRUE(differs);
}

TEST(UNetBuildTest, KaimingBoundsAndZeroBias) {
  const UNetModel m = UNetModel::build(small(), 1);
  const Parameter& w = m.parameter("enc1.conv1.weight");
  const double bound = std::sqrt(6.0 / (4 * 9));
  for (double v : w.value.data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(m.parameter("head.bias").value[0], 0.0);
}

TEST(UNetForwardTest, ShapeContract) {
  const UNetModel m1 = UNetModel::build({3, 1, {8, 16, 32}, 3}, 0);
  EXPECT_EQ(m1.forward(random_tensor({2, 3, 64, 64}, 1)).shape(), (Shape{2, 1, 64, 64}));
  const UNetModel m2 = UNetModel::build({4, 1, {8, 16, 32}, 3}, 0);
  EXPECT_EQ(m2.forward(random_tensor({1, 4, 64, 64}, 2)).shape(), (Shape{1, 1, 64, 64}));
}

TEST(UNetForwardTest, BadExtentNamesMultiple) {
  const UNetModel m = UNetModel::build({3, 1, {4, 8, 16}, 3}, 0);
  try {
    m.forward(Tensor4({1, 3, 18, 16}));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("multiple of 4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(m.forward(Tensor4({1, 2, 16, 16})), ConfigError);
}

TEST(UNetForwardTest, ZeroHeadOutputsBias) {
  UNetModel m = UNetModel::build(small(), 3);
  m.parameter("head.weight").value.fill(0.0);
  m.parameter("head.bias").value.fill(0.25);
  const Tensor4 out = m.forward(random_tensor({1, 3, 8, 8}, 4));
  for (double v : out.data()) EXPECT_EQ(v, 0.25);
}

TEST(UNetForwardTest, FullyConvolutionalWidth) {
  const UNetModel m = UNetModel::build(small(), 5);
  EXPECT_EQ(m.forward(random_tensor({1, 3, 8, 16}, 6)).shape().w, 16u);
  EXPECT_EQ(m.forward(random_tensor({1, 3, 8, 32}, 6)).shape().w, 32u);
}

TEST(UNetForwardTest, TapeMatchesConstForward) {
  UNetModel m = UNetModel::build(small(), 7);
  const Tensor4 x = random_tensor({2, 3, 8, 8}, 8);
  Tape tape;
  const Value y = m.forward(tape, tape.constant(x));
  EXPECT_EQ(tape.value(y), m.forward(x));
  EXPECT_EQ(m.forward(x), m.forward(x));
}

TEST(UNetSerializeTest, RoundTripIsBitExact) {
  testing::TempDir dir("unet_roundtrip");
  UNetModel m = UNetModel::build(small(), 9);
  m.round_to_storage_precision();
  m.metadata()["config_hash"] = "abc";
  save_model(m, dir.path() / "m.ctiu");
  const UNetModel back = load_model(dir.path() / "m.ctiu");
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.metadata().at("config_hash"), "abc");
  const auto pa = m.parameters();
  const auto pb = back.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  const Tensor4 x = random_tensor({1, 3, 8, 8}, 10);
  EXPECT_EQ(back.forward(x), m.forward(x));
}

TEST(UNetSerializeTest, TruncatedFileIsTruncationError) {
  const std::string bytes = serialize_model(UNetModel::build(small(), 11));
  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      deserialize_model(bytes.substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const LoadError& e) {
      EXPECT_EQ(e.kind(), LoadErrorKind::kTruncated) << "cut " << cut << ": " << e.what();
    }
  }
}

LoadErrorKind kind_of(const std::string& bytes) {
  try {
    deserialize_model(bytes);
  } catch (const LoadError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "load succeeded";
  return LoadErrorKind::kIo;
}

TEST(UNetSerializeTest, DistinctErrorKinds) {
  const std::string good = serialize_model(UNetModel::build(small(), 12));
  std::string magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of(magic), LoadErrorKind::kBadMagic);

  std::string version = good;
  version[4] = 2;
  EXPECT_EQ(kind_of(version), LoadErrorKind::kVersionMismatch);

  // Layout: magic(4) version(4) config length(4) config text, then the u32
  // parameter count.
  std::uint32_t cfg_len = 0;
  std::memcpy(&cfg_len, good.data() + 8, 4);
  std::string count = good;
  count[12 + cfg_len] = static_cast<char>(count[12 + cfg_len] + 1);
  EXPECT_EQ(kind_of(count), LoadErrorKind::kInconsistent);

  EXPECT_THROW(load_model("/nonexistent/model.ctiu"), LoadError);
}

TEST(UNetSerializeTest, StoragePrecisionRoundTripsThroughFloat) {
  UNetModel m = UNetModel::build(small(), 13);
  m.round_to_storage_precision();
  for (const Parameter* p : m.parameters())
    for (double v : p->value.data()) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
}

}  // namespace
}  // namespace ctiunet
