#include "wbc/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"

#include "wbc/dataio.hpp"
#include "wbc/random.hpp"

namespace wbc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 4> kVariantNames{{
    {Variant::kGap, "GAP"},
    {Variant::kGapPart, "GAP_PART"},
    {Variant::kBc, "BC"},
    {Variant::kWbcPart, "WBC_PART"},
}};

std::uint32_t u32(std::size_t n) { return static_cast<std::uint32_t>(n); }

void glorot(Matrix& m, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (double& v : m.values()) v = uniform(rng, -a, a);
}

template <typename Self, typename Block>
std::vector<Block> collect_blocks(Self& p) {
  std::vector<Block> out;
  auto add_matrix = [&](std::string name, auto& m) {
    if (m.size() == 0) return;
    out.push_back({std::move(name), {u32(m.rows()), u32(m.cols())}, m.values()});
  };
  auto add_vector = [&](std::string name, auto& v) {
    if (v.empty()) return;
    out.push_back({std::move(name), {u32(v.size())}, v});
  };
  add_matrix("backbone.conv1.weight", p.backbone.conv1_weight);
  add_vector("backbone.conv1.bias", p.backbone.conv1_bias);
  add_matrix("backbone.conv2.weight", p.backbone.conv2_weight);
  add_vector("backbone.conv2.bias", p.backbone.conv2_bias);
  add_matrix("partnet.weight", p.part_net.weights);
  add_vector("partnet.bias", p.part_net.biases);
  for (std::size_t l = 0; l < p.embeddings.size(); ++l)
    add_matrix("embed." + std::to_string(l) + ".weight", p.embeddings[l].weight);
  return out;
}

Vector slice(std::span<const double> v, std::size_t offset, std::size_t n) {
  return Vector(v.begin() + static_cast<std::ptrdiff_t>(offset),
                v.begin() + static_cast<std::ptrdiff_t>(offset + n));
}

void add_into(Tensor3& acc, const Tensor3& t) {
  auto& a = acc.values();
  const auto& b = t.values();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

json config_json(const ModelConfig& c) {
  return {{"variant", std::string(variant_name(c.variant))},
          {"parts", c.parts},
          {"channels", c.channels},
          {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},
          {"input_channels", c.input_channels},
          {"use_backbone", c.use_backbone},
          {"seed", c.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.parts = j.at("parts").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.input_channels = j.at("input_channels").get<std::size_t>();
  c.use_backbone = j.at("use_backbone").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [k, name] : kVariantNames)
    if (k == v) return name;
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [k, n] : kVariantNames)
    if (n == name) return k;
  throw ConfigError("unknown variant '" + std::string(name) +
                    "'; valid variants: GAP, GAP_PART, BC, WBC_PART");
}

bool uses_parts(Variant v) { return v == Variant::kGapPart || v == Variant::kWbcPart; }
bool uses_bilinear(Variant v) { return v == Variant::kBc || v == Variant::kWbcPart; }

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.channels == 0) throw ConfigError("model: channels must be positive");
  if (cfg.embed_dim == 0) throw ConfigError("model: embed_dim must be positive");
  if (uses_parts(cfg.variant) && cfg.parts == 0) throw ConfigError("model: parts must be positive");
  if (cfg.use_backbone && (cfg.hidden == 0 || cfg.input_channels == 0))
    throw ConfigError("model: backbone hidden and input_channels must be positive");
}

std::vector<ParamBlock> ModelParams::blocks() {
  return collect_blocks<ModelParams, ParamBlock>(*this);
}

std::vector<ConstParamBlock> ModelParams::blocks() const {
  return collect_blocks<const ModelParams, ConstParamBlock>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks()) n += b.values.size();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z = *this;
  for (auto& b : z.blocks()) std::fill(b.values.begin(), b.values.end(), 0.0);
  z.version = 0;
  return z;
}

Vector ModelParams::flatten() const {
  Vector flat;
  flat.reserve(parameter_count());
  for (const auto& b : blocks()) flat.insert(flat.end(), b.values.begin(), b.values.end());
  return flat;
}

void ModelParams::assign_flat(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("assign_flat: size mismatch");
  std::size_t off = 0;
  for (auto& b : blocks()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), b.values.size(),
                b.values.begin());
    off += b.values.size();
  }
  ++version;
}

ModelParams init_model(const ModelConfig& cfg) {
  validate_model_config(cfg);
  ModelParams p;
  p.config = cfg;
  Rng rng = derive_rng(cfg.seed, 100);
  if (cfg.use_backbone) {
    p.backbone.conv1_weight = Matrix(cfg.hidden, 9 * cfg.input_channels);
    glorot(p.backbone.conv1_weight, rng);
    p.backbone.conv1_bias = Vector(cfg.hidden, 0.0);
    p.backbone.conv2_weight = Matrix(cfg.channels, cfg.hidden);
    glorot(p.backbone.conv2_weight, rng);
    p.backbone.conv2_bias = Vector(cfg.channels, 0.0);
  }
  if (uses_parts(cfg.variant)) p.part_net = PartNetParams::init(cfg.parts, cfg.channels, rng);
  for (std::size_t l = 0; l < cfg.part_count(); ++l)
    p.embeddings.push_back(EmbeddingParams::init(cfg.pooled_dim(), cfg.embed_dim, rng));
  return p;
}

Tensor3 backbone_forward(const Tensor3& input, const BackboneParams& bb, Tensor3* hidden_pre) {
  const std::size_t cin = input.channels();
  if (bb.conv1_weight.cols() != 9 * cin)
    throw DimensionError("backbone: input has " + std::to_string(cin) +
                         " channels, conv1 expects " + std::to_string(bb.conv1_weight.cols() / 9));
  const std::size_t hidden = bb.conv1_weight.rows();
  const std::size_t oh = (input.height() - 1) / 2 + 1;
  const std::size_t ow = (input.width() - 1) / 2 + 1;
  Tensor3 pre(oh, ow, hidden);
  Vector patch(9 * cin);
  for (std::size_t op = 0; op < oh; ++op)
    for (std::size_t oq = 0; oq < ow; ++oq) {
      std::fill(patch.begin(), patch.end(), 0.0);
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const auto ip = static_cast<std::ptrdiff_t>(2 * op + ky) - 1;
          const auto iq = static_cast<std::ptrdiff_t>(2 * oq + kx) - 1;
          if (ip < 0 || iq < 0 || ip >= static_cast<std::ptrdiff_t>(input.height()) ||
              iq >= static_cast<std::ptrdiff_t>(input.width()))
            continue;
          auto px = input.pixel(static_cast<std::size_t>(ip) * input.width() +
                                static_cast<std::size_t>(iq));
          std::copy(px.begin(), px.end(), patch.begin() + static_cast<std::ptrdiff_t>((ky * 3 + kx) * cin));
        }
      for (std::size_t k = 0; k < hidden; ++k)
        pre(op, oq, k) = bb.conv1_bias[k] + dot(bb.conv1_weight.row(k), patch);
    }
  const std::size_t c = bb.conv2_weight.rows();
  Tensor3 f(oh, ow, c);
  Vector act(hidden);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto h = pre.pixel(loc);
    for (std::size_t k = 0; k < hidden; ++k) act[k] = std::max(h[k], 0.0);
    auto out = f.pixel(loc);
    for (std::size_t ch = 0; ch < c; ++ch)
      out[ch] = bb.conv2_bias[ch] + dot(bb.conv2_weight.row(ch), act);
  }
  if (hidden_pre) *hidden_pre = std::move(pre);
  return f;
}

ForwardCache forward(const Tensor3& sample, const ModelParams& params) {
  const ModelConfig& cfg = params.config;
  ForwardCache cache;
  cache.params_version = params.version;
  cache.variant = cfg.variant;
  cache.input = sample;
  if (cfg.use_backbone) {
    cache.features = backbone_forward(sample, params.backbone, &cache.hidden_pre);
  } else {
    if (sample.channels() != cfg.channels)
      throw DimensionError("feature map has " + std::to_string(sample.channels()) +
                           " channels, model expects " + std::to_string(cfg.channels));
    cache.features = sample;
  }
  const Tensor3& f = cache.features;
  if (uses_parts(cfg.variant)) cache.masks = generate_masks(f, params.part_net);

  std::vector<Vector> parts;
  for (std::size_t l = 0; l < cfg.part_count(); ++l) {
    switch (cfg.variant) {
      case Variant::kGap:
        cache.pooled.push_back(gap(f));
        break;
      case Variant::kGapPart:
        cache.pooled.push_back(masked_mean(cache.masks[l], f));
        break;
      case Variant::kBc:
        cache.codes.push_back(bilinear_code(f).flat());
        cache.pooled.push_back(signed_sqrt(cache.codes.back()));
        break;
      case Variant::kWbcPart:
        cache.codes.push_back(weighted_bilinear_code(cache.masks[l], f).flat());
        cache.pooled.push_back(signed_sqrt(cache.codes.back()));
        break;
    }
    parts.push_back(embed(cache.pooled.back(), params.embeddings.at(l)));
  }
  for (const Vector& p : parts) cache.raw.insert(cache.raw.end(), p.begin(), p.end());
  cache.feature = concat_normalize(parts);
  return cache;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const double> d_feature) {
  const ModelConfig& cfg = params.config;
  if (cache.params_version != params.version)
    throw ContractError("backward: cache was produced by parameter version " +
                        std::to_string(cache.params_version) + ", parameters are at " +
                        std::to_string(params.version));
  if (cache.variant != cfg.variant)
    throw ContractError("backward: cache variant does not match model variant");
  if (d_feature.size() != cache.raw.size())
    throw DimensionError("backward: feature gradient has length " +
                         std::to_string(d_feature.size()) + ", expected " +
                         std::to_string(cache.raw.size()));

  ModelParams grads = params.zeros_like();
  const Tensor3& f = cache.features;
  const std::size_t c = f.channels();
  const Vector d_raw = l2_normalize_backward(cache.raw, d_feature);
  Tensor3 d_f(f.height(), f.width(), c);
  std::vector<Vector> d_masks;

  for (std::size_t l = 0; l < cfg.part_count(); ++l) {
    const Vector d_out = slice(d_raw, l * cfg.embed_dim, cfg.embed_dim);
    EmbedGrads eg = embed_backward(cache.pooled[l], params.embeddings[l], d_out);
    grads.embeddings[l].weight = std::move(eg.d_weight);
    switch (cfg.variant) {
      case Variant::kGap:
        add_into(d_f, gap_backward(f, eg.d_input));
        break;
      case Variant::kGapPart: {
        MaskedMeanGrads mg = masked_mean_backward(cache.masks[l], f, eg.d_input);
        add_into(d_f, mg.d_features);
        d_masks.push_back(std::move(mg.d_mask));
        break;
      }
      case Variant::kBc: {
        Vector d_code = signed_sqrt_backward(cache.codes[l], eg.d_input);
        add_into(d_f, bilinear_code_backward(f, Matrix(c, c, std::move(d_code))));
        break;
      }
      case Variant::kWbcPart: {
        Vector d_code = signed_sqrt_backward(cache.codes[l], eg.d_input);
        WbcGrads wg = wbc_backward(cache.masks[l], f, Matrix(c, c, std::move(d_code)));
        add_into(d_f, wg.d_features);
        d_masks.push_back(std::move(wg.d_mask));
        break;
      }
    }
  }

  if (uses_parts(cfg.variant)) {
    PartNetGrads pg = partnet_backward(f, params.part_net, d_masks);
    add_into(d_f, pg.d_features);
    grads.part_net = std::move(pg.d_params);
  }

  if (!cfg.use_backbone) return grads;

  const BackboneParams& bb = params.backbone;
  BackboneParams& gb = grads.backbone;
  const Tensor3& pre = cache.hidden_pre;
  const Tensor3& in = cache.input;
  const std::size_t hidden = bb.conv1_weight.rows();
  const std::size_t cin = in.channels();
  Vector act(hidden), d_pre(hidden);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto h = pre.pixel(loc);
    auto df = d_f.pixel(loc);
    for (std::size_t k = 0; k < hidden; ++k) act[k] = std::max(h[k], 0.0);
    std::fill(d_pre.begin(), d_pre.end(), 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
      gb.conv2_bias[ch] += df[ch];
      auto w = bb.conv2_weight.row(ch);
      auto dw = gb.conv2_weight.row(ch);
      for (std::size_t k = 0; k < hidden; ++k) {
        dw[k] += df[ch] * act[k];
        d_pre[k] += w[k] * df[ch];
      }
    }
    for (std::size_t k = 0; k < hidden; ++k)
      if (h[k] <= 0.0) d_pre[k] = 0.0;

    const std::size_t op = loc / f.width();
    const std::size_t oq = loc % f.width();
    for (std::size_t k = 0; k < hidden; ++k) {
      if (d_pre[k] == 0.0) continue;
      gb.conv1_bias[k] += d_pre[k];
      auto dw = gb.conv1_weight.row(k);
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const auto ip = static_cast<std::ptrdiff_t>(2 * op + ky) - 1;
          const auto iq = static_cast<std::ptrdiff_t>(2 * oq + kx) - 1;
          if (ip < 0 || iq < 0 || ip >= static_cast<std::ptrdiff_t>(in.height()) ||
              iq >= static_cast<std::ptrdiff_t>(in.width()))
            continue;
          auto px = in.pixel(static_cast<std::size_t>(ip) * in.width() +
                             static_cast<std::size_t>(iq));
          const std::size_t base = (ky * 3 + kx) * cin;
          for (std::size_t ci = 0; ci < cin; ++ci) dw[base + ci] += d_pre[k] * px[ci];
        }
    }
  }
  return grads;
}

void save_checkpoint(const fs::path& dir, const ModelParams& params) {
  fs::create_directories(dir / "params");
  json doc;
  doc["format"] = "wbc-checkpoint";
  doc["version"] = 1;
  doc["variant"] = std::string(variant_name(params.config.variant));
  doc["config"] = config_json(params.config);
  json blocks = json::array();
  for (const auto& b : params.blocks()) {
    const std::string file = "params/" + b.name + ".wbct";
    write_tensor(dir / file,
                 TensorData{b.dims, Precision::kFloat64, Vector(b.values.begin(), b.values.end())});
    blocks.push_back({{"name", b.name}, {"file", file}, {"dims", b.dims}});
  }
  doc["params"] = std::move(blocks);
  std::ofstream os(dir / kCheckpointManifest, std::ios::trunc);
  if (!os) throw Error("cannot write checkpoint manifest in " + dir.string());
  os << doc.dump(2) << "\n";
}

ModelParams load_checkpoint(const fs::path& dir) {
  std::ifstream is(dir / kCheckpointManifest);
  if (!is) throw Error("cannot open " + (dir / kCheckpointManifest).string());
  json doc;
  ModelConfig cfg;
  try {
    doc = json::parse(is);
    if (doc.at("format").get<std::string>() != "wbc-checkpoint")
      throw FormatError("not a wbc checkpoint manifest", 0);
    cfg = config_from_json(doc.at("config"));
    if (doc.at("variant").get<std::string>() != variant_name(cfg.variant))
      throw FormatError("checkpoint variant tag disagrees with its config", 0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint manifest: ") + e.what(), 0);
  }
  ModelParams params = init_model(cfg);
  auto blocks = params.blocks();
  const json& listed = doc.at("params");
  if (listed.size() != blocks.size())
    throw FormatError("checkpoint lists " + std::to_string(listed.size()) + " tensors, variant " +
                          std::string(variant_name(cfg.variant)) + " needs " +
                          std::to_string(blocks.size()),
                      0);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const json& entry = listed[i];
    if (entry.at("name").get<std::string>() != blocks[i].name)
      throw FormatError("unexpected checkpoint tensor " + entry.at("name").get<std::string>(), 0);
    const TensorData t = read_tensor(dir / entry.at("file").get<std::string>());
    if (t.dims != blocks[i].dims)
      throw DimensionError("checkpoint tensor " + blocks[i].name + " has wrong shape");
    std::copy(t.values.begin(), t.values.end(), blocks[i].values.begin());
  }
  return params;
}

}  // namespace wbc
