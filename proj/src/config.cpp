#include "wbc/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace wbc {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(const char* key, T RunConfig::*section, std::size_t T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = parse_number<std::size_t>(key, v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field seed_field(const char* key, T RunConfig::*section, std::uint64_t T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = parse_number<std::uint64_t>(key, v);
          },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field real_field(const char* key, T RunConfig::*section, double T::*member) {
  return {key,
          [=](RunConfig& c, const std::string& v) {
            (c.*section).*member = parse_number<double>(key, v);
          },
          [=](const RunConfig& c) { return fmt((c.*section).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    using R = RunConfig;
    f.push_back(size_field("synth.identities", &R::synth, &SynthConfig::identities));
    f.push_back(size_field("synth.images_per_identity", &R::synth, &SynthConfig::images_per_identity));
    f.push_back(size_field("synth.test_identities", &R::synth, &SynthConfig::test_identities));
    f.push_back(size_field("synth.height", &R::synth, &SynthConfig::height));
    f.push_back(size_field("synth.width", &R::synth, &SynthConfig::width));
    f.push_back(size_field("synth.channels", &R::synth, &SynthConfig::channels));
    f.push_back(size_field("synth.parts", &R::synth, &SynthConfig::parts));
    f.push_back(size_field("synth.palette", &R::synth, &SynthConfig::palette));
    f.push_back(real_field("synth.texture_scale", &R::synth, &SynthConfig::texture_scale));
    f.push_back(size_field("synth.jitter", &R::synth, &SynthConfig::jitter));
    f.push_back(real_field("synth.noise", &R::synth, &SynthConfig::noise));
    f.push_back(seed_field("synth.seed", &R::synth, &SynthConfig::seed));

    f.push_back({"model.variant",
                 [](RunConfig& c, const std::string& v) { c.model.variant = parse_variant(v); },
                 [](const RunConfig& c) { return std::string(variant_name(c.model.variant)); }});
    f.push_back(size_field("model.parts", &R::model, &ModelConfig::parts));
    f.push_back(size_field("model.channels", &R::model, &ModelConfig::channels));
    f.push_back(size_field("model.embed_dim", &R::model, &ModelConfig::embed_dim));
    f.push_back(size_field("model.hidden", &R::model, &ModelConfig::hidden));
    f.push_back(size_field("model.input_channels", &R::model, &ModelConfig::input_channels));
    f.push_back({"model.use_backbone",
                 [](RunConfig& c, const std::string& v) {
                   c.model.use_backbone = parse_bool("model.use_backbone", v);
                 },
                 [](const RunConfig& c) { return std::string(c.model.use_backbone ? "true" : "false"); }});
    f.push_back(seed_field("model.seed", &R::model, &ModelConfig::seed));

    f.push_back(real_field("sgd.initial_lr", &R::sgd, &SGDConfig::initial_lr));
    f.push_back(size_field("sgd.halve_period", &R::sgd, &SGDConfig::halve_period));
    f.push_back(real_field("sgd.momentum", &R::sgd, &SGDConfig::momentum));
    f.push_back(real_field("sgd.weight_decay", &R::sgd, &SGDConfig::weight_decay));
    f.push_back(size_field("sgd.batch_size", &R::sgd, &SGDConfig::batch_size));
    f.push_back(size_field("sgd.identities_per_batch", &R::sgd, &SGDConfig::identities_per_batch));
    f.push_back(size_field("sgd.images_per_identity", &R::sgd, &SGDConfig::images_per_identity));
    f.push_back(size_field("sgd.max_iters", &R::sgd, &SGDConfig::max_iters));
    f.push_back(seed_field("sgd.seed", &R::sgd, &SGDConfig::seed));
    f.push_back(size_field("sgd.threads", &R::sgd, &SGDConfig::threads));

    f.push_back(real_field("loss.margin", &R::loss, &LossConfig::margin));
    f.push_back(size_field("loss.max_triplets", &R::loss, &LossConfig::max_triplets));
    f.push_back(seed_field("loss.subsample_seed", &R::loss, &LossConfig::subsample_seed));
    return f;
  }();
  return table;
}

}  // namespace

std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    KeyValue kv{trim(std::string_view(body).substr(0, eq)),
                trim(std::string_view(body).substr(eq + 1)), lineno};
    if (kv.key.empty() || kv.value.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    out.push_back(std::move(kv));
  }
  return out;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const Field& f : fields())
    if (key == f.key) {
      f.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto kvs = parse_key_values(assignment);
  if (kvs.size() != 1) throw ConfigError("override must look like key=value: '" + assignment + "'");
  apply_setting(cfg, kvs[0].key, kvs[0].value);
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  for (const KeyValue& kv : parse_key_values(text)) {
    try {
      apply_setting(cfg, kv.key, kv.value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

}  // namespace wbc
