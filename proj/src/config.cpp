#include "voxgan/config.hpp"

#include "voxgan/container.hpp"

#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>

namespace voxgan {

const char* mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::IWGan: return "iwgan";
    case TrainMode::VaeIWGan: return "vae-iwgan";
    case TrainMode::VanillaGan: return "vanilla-gan-baseline";
  }
  return "?";
}

TrainMode parse_mode(const std::string& s) {
  for (auto m : {TrainMode::IWGan, TrainMode::VaeIWGan, TrainMode::VanillaGan})
    if (s == mode_name(m)) return m;
  throw ConfigError("unknown mode '" + s + "' (expected iwgan, vae-iwgan or vanilla-gan-baseline)");
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void TrainConfig::validate() const {
  if (gen_interval < 1) throw ConfigError("gen_interval must be at least 1");
  if (batch_size < 2) throw ConfigError("batch must be at least 2 (generator batch normalization)");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (lambda < 0 || delta < 0) throw ConfigError("lambda and delta must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

namespace {

template <typename T>
T parse_number(const std::string& v) {
  T out{};
  if constexpr (std::is_floating_point_v<T>) {
    std::istringstream is(v);
    is.imbue(std::locale::classic());
    double d;
    is >> d;
    if (!is || !is.eof()) throw ConfigError("'" + v + "' is not a number");
    return static_cast<T>(d);
  } else {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError("'" + v + "' is not an integer");
    return out;
  }
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("'" + v + "' is not a boolean");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Key {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> put;
};

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      {"mode", [](const RunConfig& c) { return std::string(mode_name(c.train.mode)); },
       [](RunConfig& c, const std::string& v) { c.train.mode = parse_mode(v); }},
      {"data", [](const RunConfig& c) { return c.data; }, [](RunConfig& c, const std::string& v) { c.data = v; }},
      {"data_count", [](const RunConfig& c) { return std::to_string(c.data_count); },
       [](RunConfig& c, const std::string& v) { c.data_count = parse_number<std::int64_t>(v); }},
      {"orientations", [](const RunConfig& c) { return std::to_string(c.data_orientations); },
       [](RunConfig& c, const std::string& v) { c.data_orientations = parse_number<int>(v); }},
      {"data_seed", [](const RunConfig& c) { return std::to_string(c.data_seed); },
       [](RunConfig& c, const std::string& v) { c.data_seed = parse_number<std::uint64_t>(v); }},
      {"res", [](const RunConfig& c) { return std::to_string(c.model.resolution); },
       [](RunConfig& c, const std::string& v) { c.model.resolution = parse_number<std::int64_t>(v); }},
      {"latent_dim", [](const RunConfig& c) { return std::to_string(c.model.latent_dim); },
       [](RunConfig& c, const std::string& v) { c.model.latent_dim = parse_number<std::int64_t>(v); }},
      {"width", [](const RunConfig& c) { return std::to_string(c.model.width); },
       [](RunConfig& c, const std::string& v) { c.model.width = parse_number<std::int64_t>(v); }},
      {"init_std", [](const RunConfig& c) { return format_real(c.model.init_std); },
       [](RunConfig& c, const std::string& v) { c.model.init_std = parse_number<Real>(v); }},
      {"encoder", [](const RunConfig& c) { return std::string(base_name(c.encoder)); },
       [](RunConfig& c, const std::string& v) { c.encoder = parse_base(v); }},
      {"epochs", [](const RunConfig& c) { return std::to_string(c.train.epochs); },
       [](RunConfig& c, const std::string& v) { c.train.epochs = parse_number<std::int64_t>(v); }},
      {"batch", [](const RunConfig& c) { return std::to_string(c.train.batch_size); },
       [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<std::int64_t>(v); }},
      {"gen_interval", [](const RunConfig& c) { return std::to_string(c.train.gen_interval); },
       [](RunConfig& c, const std::string& v) { c.train.gen_interval = parse_number<std::int64_t>(v); }},
      {"lambda", [](const RunConfig& c) { return format_real(c.train.lambda); },
       [](RunConfig& c, const std::string& v) { c.train.lambda = parse_number<Real>(v); }},
      {"delta", [](const RunConfig& c) { return format_real(c.train.delta); },
       [](RunConfig& c, const std::string& v) { c.train.delta = parse_number<Real>(v); }},
      {"lr_generator", [](const RunConfig& c) { return format_real(c.train.lr_generator); },
       [](RunConfig& c, const std::string& v) { c.train.lr_generator = parse_number<Real>(v); }},
      {"lr_discriminator", [](const RunConfig& c) { return format_real(c.train.lr_discriminator); },
       [](RunConfig& c, const std::string& v) { c.train.lr_discriminator = parse_number<Real>(v); }},
      {"lr_encoder", [](const RunConfig& c) { return format_real(c.train.lr_encoder); },
       [](RunConfig& c, const std::string& v) { c.train.lr_encoder = parse_number<Real>(v); }},
      {"beta1", [](const RunConfig& c) { return format_real(c.train.beta1); },
       [](RunConfig& c, const std::string& v) { c.train.beta1 = parse_number<Real>(v); }},
      {"beta2", [](const RunConfig& c) { return format_real(c.train.beta2); },
       [](RunConfig& c, const std::string& v) { c.train.beta2 = parse_number<Real>(v); }},
      {"adam_epsilon", [](const RunConfig& c) { return format_real(c.train.adam_epsilon); },
       [](RunConfig& c, const std::string& v) { c.train.adam_epsilon = parse_number<Real>(v); }},
      {"seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
       [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(v); }},
      {"checkpoint_every", [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); },
       [](RunConfig& c, const std::string& v) { c.train.checkpoint_every = parse_number<std::int64_t>(v); }},
      {"adversarial_on_reconstruction",
       [](const RunConfig& c) { return std::string(c.train.adversarial_on_reconstruction ? "1" : "0"); },
       [](RunConfig& c, const std::string& v) { c.train.adversarial_on_reconstruction = parse_bool(v); }},
      {"out", [](const RunConfig& c) { return c.out; }, [](RunConfig& c, const std::string& v) { c.out = v; }},
  };
  return k;
}

}  // namespace

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& where) {
  const std::string prefix = where.empty() ? "" : where + ": ";
  for (const auto& k : keys())
    if (key == k.name) {
      try {
        k.put(*this, value);
      } catch (const std::exception& e) {
        throw ConfigError(prefix + "key '" + key + "': " + e.what());
      }
      return;
    }
  throw ConfigError(prefix + "unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  train.validate();
  model.validate();
  if (encoder != NetworkBase::VoxelEncoder && encoder != NetworkBase::ImageEncoder)
    throw ConfigError("encoder must be voxel-encoder or image-encoder");
  if (data_count < 1) throw ConfigError("data_count must be positive");
  if (data_orientations < 1 || data_orientations > 4) throw ConfigError("orientations must be in 1..4");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(n);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_all(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, path.string());
}

}  // namespace voxgan
