#include "ctiunet/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ctiunet/errors.hpp"
#include "ctiunet/ops.hpp"

namespace ctiunet {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'I', 'U'};

std::string join(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) {
    throw LoadError(LoadErrorKind::kInconsistent,
                    "bad value for " + key + ": '" + text + "'");
  }
  return static_cast<std::size_t>(v);
}

std::string level_prefix(const char* part, std::size_t level) {
  return std::string(part) + std::to_string(level) + ".";
}

// --- little-endian byte helpers -------------------------------------------

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw LoadError(LoadErrorKind::kTruncated,
                      std::string("model file truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32("parameter values");
    float f;
    std::memcpy(&f, &bits, sizeof f);
    return f;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

UNetConfig parse_config_text(const std::string& text,
                             std::map<std::string, std::string>& metadata) {
  UNetConfig cfg;
  bool seen_in = false, seen_out = false, seen_enc = false, seen_k = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw LoadError(LoadErrorKind::kInconsistent,
                      "malformed config line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "in_channels") {
      cfg.in_channels = parse_count(key, value);
      seen_in = true;
    } else if (key == "out_channels") {
      cfg.out_channels = parse_count(key, value);
      seen_out = true;
    } else if (key == "kernel_size") {
      cfg.kernel_size = parse_count(key, value);
      seen_k = true;
    } else if (key == "encoder_channels") {
      cfg.encoder_channels.clear();
      std::istringstream vs(value);
      std::string item;
      while (std::getline(vs, item, ','))
        cfg.encoder_channels.push_back(parse_count(key, item));
      seen_enc = true;
    } else if (key.rfind("meta.", 0) == 0) {
      metadata[key.substr(5)] = value;
    } else {
      throw LoadError(LoadErrorKind::kInconsistent,
                      "unknown config key '" + key + "'");
    }
  }
  if (!(seen_in && seen_out && seen_enc && seen_k)) {
    throw LoadError(LoadErrorKind::kInconsistent,
                    "model config is missing required keys");
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw LoadError(LoadErrorKind::kInconsistent, e.what());
  }
  return cfg;
}

}  // namespace

std::size_t UNetConfig::spatial_factor() const {
  return depth() == 0 ? 1 : std::size_t{1} << (depth() - 1);
}

void UNetConfig::validate() const {
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
  if (out_channels < 1) throw ConfigError("out_channels must be >= 1");
  if (encoder_channels.empty())
    throw ConfigError("encoder_channels must be non-empty");
  for (std::size_t c : encoder_channels)
    if (c == 0) throw ConfigError("encoder_channels must be strictly positive");
  if (kernel_size == 0 || kernel_size % 2 == 0)
    throw ConfigError("kernel_size must be odd, got " +
                      std::to_string(kernel_size));
}

std::string UNetConfig::to_text() const {
  std::ostringstream os;
  os << "in_channels=" << in_channels << "\n"
     << "out_channels=" << out_channels << "\n"
     << "encoder_channels=" << join(encoder_channels) << "\n"
     << "kernel_size=" << kernel_size << "\n";
  return os.str();
}

UNetModel UNetModel::build(const UNetConfig& config, std::uint64_t seed) {
  config.validate();
  UNetModel model;
  model.config_ = config;
  const std::size_t k = config.kernel_size;
  const auto& ch = config.encoder_channels;
  std::mt19937_64 rng(seed);

  auto add = [&](std::string name, Shape shape, double fill) {
    model.index_[name] = model.params_.size();
    model.params_.emplace_back(std::move(name), Tensor4(shape, fill));
  };
  // Kaiming-uniform for relu: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
  auto add_conv = [&](const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel) {
    Tensor4 w({out, in, kernel, kernel});
    const double bound =
        std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w.data()) v = dist(rng);
    model.index_[name] = model.params_.size();
    model.params_.emplace_back(name, std::move(w));
  };
  auto add_norm = [&](const std::string& prefix, std::size_t c) {
    add(prefix + ".scale", {1, c, 1, 1}, 1.0);
    add(prefix + ".shift", {1, c, 1, 1}, 0.0);
  };

  std::size_t in = config.in_channels;
  for (std::size_t l = 0; l < ch.size(); ++l) {
    const std::string p = level_prefix("enc", l);
    add_conv(p + "conv1.weight", in, ch[l], k);
    add_norm(p + "norm1", ch[l]);
    add_conv(p + "conv2.weight", ch[l], ch[l], k);
    add_norm(p + "norm2", ch[l]);
    in = ch[l];
  }
  for (std::size_t l = ch.size() - 1; l-- > 0;) {
    const std::string p = level_prefix("dec", l);
    add_conv(p + "up.weight", ch[l + 1], ch[l], k);
    add_norm(p + "upnorm", ch[l]);
    add_conv(p + "conv1.weight", 2 * ch[l], ch[l], k);
    add_norm(p + "norm1", ch[l]);
    add_conv(p + "conv2.weight", ch[l], ch[l], k);
    add_norm(p + "norm2", ch[l]);
  }
  add_conv("head.weight", ch[0], config.out_channels, 1);
  add("head.bias", {1, config.out_channels, 1, 1}, 0.0);

  model.round_to_storage_precision();
  return model;
}

UNetModel::UNetModel(const UNetModel& other)
    : config_(other.config_),
      params_(other.params_),
      index_(other.index_),
      metadata_(other.metadata_) {}

UNetModel& UNetModel::operator=(const UNetModel& other) {
  if (this != &other) {
    config_ = other.config_;
    params_ = other.params_;
    index_ = other.index_;
    metadata_ = other.metadata_;
  }
  return *this;
}

std::vector<Parameter*> UNetModel::parameters() {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> UNetModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const Parameter& p : params_) out.push_back(&p);
  return out;
}

Parameter& UNetModel::parameter(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("no parameter named '" + name + "'");
  return params_[it->second];
}

const Parameter& UNetModel::parameter(const std::string& name) const {
  return const_cast<UNetModel*>(this)->parameter(name);
}

std::size_t UNetModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

void UNetModel::check_input(const Shape& s) const {
  if (s.c != config_.in_channels) {
    throw ConfigError("model expects " + std::to_string(config_.in_channels) +
                      " input channels, got " + s.str());
  }
  const std::size_t f = config_.spatial_factor();
  if (s.h == 0 || s.w == 0 || s.h % f != 0 || s.w % f != 0) {
    throw ConfigError("input spatial extent " + std::to_string(s.h) + "x" +
                      std::to_string(s.w) + " must be a multiple of " +
                      std::to_string(f));
  }
}

template <typename ParamFn>
Value UNetModel::forward_impl(Tape& tape, Value batch, ParamFn&& param) const {
  check_input(batch.shape());
  const std::size_t depth = config_.depth();
  auto block = [&](Value x, const std::string& conv, const std::string& norm,
                   std::size_t stride) {
    Value y = conv2d(x, param(conv + ".weight"), std::nullopt,
                     {stride, Padding::kSame});
    y = instance_norm(y, param(norm + ".scale"), param(norm + ".shift"));
    return relu(y);
  };

  std::vector<Value> skips;
  Value x = batch;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string p = level_prefix("enc", l);
    x = block(x, p + "conv1", p + "norm1", l == 0 ? 1 : 2);
    x = block(x, p + "conv2", p + "norm2", 1);
    skips.push_back(x);
  }
  for (std::size_t l = depth - 1; l-- > 0;) {
    const std::string p = level_prefix("dec", l);
    Value up = block(upsample_nearest2(x), p + "up", p + "upnorm", 1);
    x = concat_channels(skips[l], up);
    x = block(x, p + "conv1", p + "norm1", 1);
    x = block(x, p + "conv2", p + "norm2", 1);
  }
  (void)tape;
  return conv2d(x, param("head.weight"), param("head.bias"),
                {1, Padding::kValid});
}

Value UNetModel::forward(Tape& tape, Value batch) {
  return forward_impl(tape, batch, [&](const std::string& name) {
    return tape.parameter(parameter(name));
  });
}

Tensor4 UNetModel::forward(const Tensor4& batch) const {
  Tape tape(false);
  Value out = forward_impl(tape, tape.constant(batch),
                           [&](const std::string& name) {
                             return tape.constant(parameter(name).value);
                           });
  return out.value();
}

Tensor4 UNetModel::predict(const Tensor4& batch) const {
  return sigmoid(forward(batch));
}

void UNetModel::round_to_storage_precision() {
  for (Parameter& p : params_)
    for (double& v : p.value.data()) v = static_cast<double>(static_cast<float>(v));
}

std::string serialize_model(const UNetModel& model) {
  std::string cfg = model.config().to_text();
  for (const auto& [k, v] : model.metadata()) cfg += "meta." + k + "=" + v + "\n";

  std::vector<const Parameter*> sorted = model.parameters();
  std::sort(sorted.begin(), sorted.end(),
            [](const Parameter* a, const Parameter* b) { return a->name < b->name; });

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kModelFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  put_u32(out, static_cast<std::uint32_t>(sorted.size()));
  for (const Parameter* p : sorted) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    const Shape s = p->value.shape();
    for (std::size_t e : {s.n, s.c, s.h, s.w})
      put_u32(out, static_cast<std::uint32_t>(e));
    for (double v : p->value.data()) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof bits);
      put_u32(out, bits);
    }
  }
  return out;
}

UNetModel deserialize_model(const std::string& bytes) {
  Reader r(bytes);
  if (r.text(4, "magic") != std::string(kMagic, 4)) {
    throw LoadError(LoadErrorKind::kBadMagic, "not a CTIU model file");
  }
  const std::uint32_t version = r.u32("format version");
  if (version != kModelFormatVersion) {
    throw LoadError(LoadErrorKind::kVersionMismatch,
                    "model format version " + std::to_string(version) +
                        ", expected " + std::to_string(kModelFormatVersion));
  }
  const std::uint32_t cfg_len = r.u32("config length");
  std::map<std::string, std::string> metadata;
  const UNetConfig cfg = parse_config_text(r.text(cfg_len, "config"), metadata);

  // The config determines the parameter layout; file contents must match it
  // exactly.
  UNetModel model = UNetModel::build(cfg, 0);
  model.metadata_ = std::move(metadata);

  const std::uint32_t declared = r.u32("parameter count");
  if (declared != model.params_.size()) {
    throw LoadError(LoadErrorKind::kInconsistent,
                    "file declares " + std::to_string(declared) +
                        " parameters, config implies " +
                        std::to_string(model.params_.size()));
  }
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < declared; ++i) {
    const std::uint32_t name_len = r.u32("parameter name length");
    const std::string name = r.text(name_len, "parameter name");
    Shape s;
    s.n = r.u32("parameter shape");
    s.c = r.u32("parameter shape");
    s.h = r.u32("parameter shape");
    s.w = r.u32("parameter shape");
    auto it = model.index_.find(name);
    if (it == model.index_.end() || seen[name]) {
      throw LoadError(LoadErrorKind::kInconsistent,
                      "unexpected parameter '" + name + "'");
    }
    seen[name] = true;
    Parameter& p = model.params_[it->second];
    if (p.value.shape() != s) {
      throw LoadError(LoadErrorKind::kInconsistent,
                      "parameter '" + name + "' has shape " + s.str() +
                          ", config implies " + p.value.shape().str());
    }
    for (double& v : p.value.data()) v = static_cast<double>(r.f32());
  }
  if (!r.done()) {
    throw LoadError(LoadErrorKind::kInconsistent,
                    "trailing bytes after the last parameter");
  }
  return model;
}

void save_model(const UNetModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_model(model);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write " + tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw ConfigError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

UNetModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError(LoadErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return deserialize_model(buf.str());
}

}  // namespace ctiunet
