#include "ctiunet/run_config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "ctiunet/errors.hpp"
#include "ctiunet/hashing.hpp"

namespace ctiunet {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" +
                      v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::string body = v;
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']')
    body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::istringstream is(body);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F f) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ",";
    out += f(values[i]);
  }
  return out;
}

void set_model(UNetConfig& m, const std::string& key, const std::string& field,
               const std::string& v) {
  if (field == "in_channels") {
    m.in_channels = to_u64(key, v);
  } else if (field == "encoder_channels") {
    m.encoder_channels.clear();
    for (const auto& item : split_list(v)) m.encoder_channels.push_back(to_u64(key, item));
  } else if (field == "kernel_size") {
    m.kernel_size = to_u64(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void set_loss(CompositeLossConfig& l, const std::string& key, const std::string& field,
              const std::string& v) {
  if (field == "alpha") {
    l.tversky.alpha = to_double(key, v);
  } else if (field == "beta") {
    l.tversky.beta = to_double(key, v);
  } else if (field == "smooth") {
    l.tversky.smooth = to_double(key, v);
  } else if (field == "ce_weight") {
    l.ce_weight = to_double(key, v);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

void RunConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string v = unquote(trim(value_in));
  const auto dot = key.find('.');
  const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
  const std::string field = dot == std::string::npos ? key : key.substr(dot + 1);

  if (key == "seed") {
    seed = to_u64(key, v);
  } else if (key == "out_dir") {
    out_dir = v;
  } else if (key == "data.root") {
    data_root = v;
  } else if (key == "data.synthetic_count") {
    synthetic_count = to_u64(key, v);
  } else if (key == "data.image_size") {
    image_size = to_u64(key, v);
  } else if (key == "data.difficulty") {
    difficulty = to_double(key, v);
  } else if (key == "data.train_fraction") {
    train_fraction = to_double(key, v);
  } else if (section == "model1") {
    set_model(model1, key, field, v);
  } else if (section == "model2") {
    set_model(model2, key, field, v);
  } else if (key == "cascade.thresholds") {
    thresholds.values.clear();
    for (const auto& item : split_list(v)) thresholds.values.push_back(to_double(key, item));
  } else if (key == "window.size") {
    window.window = to_u64(key, v);
  } else if (key == "window.overlap") {
    window.overlap = to_double(key, v);
  } else if (key == "window.blend") {
    if (v == "constant") {
      window.blend = Blend::kConstant;
    } else if (v == "gaussian") {
      window.blend = Blend::kGaussian;
    } else {
      throw ConfigError("window.blend must be constant or gaussian, got '" + v + "'");
    }
  } else if (key == "stage2.teacher") {
    if (v == "full") {
      stage2_teacher = TeacherMode::kFullImage;
    } else if (v == "window") {
      stage2_teacher = TeacherMode::kSlidingWindow;
    } else {
      throw ConfigError("stage2.teacher must be full or window, got '" + v + "'");
    }
  } else if (section == "loss1") {
    set_loss(loss1, key, field, v);
  } else if (section == "loss2") {
    set_loss(loss2, key, field, v);
  } else if (key == "train.lr") {
    adam.lr = to_double(key, v);
  } else if (key == "train.beta1") {
    adam.beta1 = to_double(key, v);
  } else if (key == "train.beta2") {
    adam.beta2 = to_double(key, v);
  } else if (key == "train.eps") {
    adam.eps = to_double(key, v);
  } else if (key == "train.batch_size") {
    batch_size = to_u64(key, v);
  } else if (key == "train.epochs") {
    epochs = to_u64(key, v);
  } else if (key == "augment.enabled") {
    augment = to_bool(key, v);
  } else if (section == "augment") {
    // augment.<transform>.<param>, with "p" for the probability.
    const auto dot2 = field.find('.');
    const auto kind = transform_from_name(field.substr(0, dot2));
    if (!kind || dot2 == std::string::npos) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    TransformEntry& e = augment_spec.entry(*kind);
    const std::string param = field.substr(dot2 + 1);
    if (param == "p") {
      e.probability = to_double(key, v);
    } else if (e.params.count(param)) {
      e.params[param] = to_double(key, v);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string RunConfig::to_text() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["out_dir"] = "\"" + out_dir.string() + "\"";
  kv["data.root"] = "\"" + data_root.string() + "\"";
  kv["data.synthetic_count"] = std::to_string(synthetic_count);
  kv["data.image_size"] = std::to_string(image_size);
  kv["data.difficulty"] = fmt_double(difficulty);
  kv["data.train_fraction"] = fmt_double(train_fraction);
  auto model = [&](const std::string& p, const UNetConfig& m) {
    kv[p + ".in_channels"] = std::to_string(m.in_channels);
    kv[p + ".encoder_channels"] =
        join(m.encoder_channels, [](std::size_t c) { return std::to_string(c); });
    kv[p + ".kernel_size"] = std::to_string(m.kernel_size);
  };
  model("model1", model1);
  model("model2", model2);
  kv["cascade.thresholds"] = join(thresholds.values, fmt_double);
  kv["window.size"] = std::to_string(window.window);
  kv["window.overlap"] = fmt_double(window.overlap);
  kv["window.blend"] = window.blend == Blend::kConstant ? "constant" : "gaussian";
  kv["stage2.teacher"] = stage2_teacher == TeacherMode::kFullImage ? "full" : "window";
  auto loss = [&](const std::string& p, const CompositeLossConfig& l) {
    kv[p + ".alpha"] = fmt_double(l.tversky.alpha);
    kv[p + ".beta"] = fmt_double(l.tversky.beta);
    kv[p + ".smooth"] = fmt_double(l.tversky.smooth);
    kv[p + ".ce_weight"] = fmt_double(l.ce_weight);
  };
  loss("loss1", loss1);
  loss("loss2", loss2);
  kv["train.lr"] = fmt_double(adam.lr);
  kv["train.beta1"] = fmt_double(adam.beta1);
  kv["train.beta2"] = fmt_double(adam.beta2);
  kv["train.eps"] = fmt_double(adam.eps);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.epochs"] = std::to_string(epochs);
  kv["augment.enabled"] = augment ? "true" : "false";
  for (const auto& t : augment_spec.transforms) {
    const std::string p = "augment." + std::string(transform_name(t.kind)) + ".";
    kv[p + "p"] = fmt_double(t.probability);
    for (const auto& [name, value] : t.params) kv[p + name] = fmt_double(value);
  }
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string RunConfig::hash() const {
  // The output location is not part of a run's identity.
  std::istringstream is(to_text());
  std::string line;
  std::string body;
  while (std::getline(is, line))
    if (line.rfind("out_dir ", 0) != 0) body += line + "\n";
  return sha256_hex(body).substr(0, 16);
}

void RunConfig::validate() const {
  model1.validate();
  model2.validate();
  thresholds.validate();
  window.validate();
  loss1.tversky.validate();
  loss2.tversky.validate();
  augment_spec.validate();
  if (model1.in_channels != 3) {
    throw ConfigError("model1.in_channels must be 3 (RGB input)");
  }
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("data.train_fraction must lie in [0, 1]");
  }
  if (!(adam.lr >= 0.0)) throw ConfigError("train.lr must be >= 0");
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      // '#' inside a quoted value is kept.
      if (line.find('"') == std::string::npos || hash < line.find('"')) line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    cfg.set(key, line.substr(eq + 1));
  }
  cfg.augment_spec.master_seed = cfg.seed;
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse(buf.str());
}

}  // namespace ctiunet
