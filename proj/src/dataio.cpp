#include "wbc/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <set>

#include "json.hpp"

namespace wbc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint8_t kMagic[4] = {'W', 'B', 'C', 'T'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xffu));
}

template <typename U>
U get_le(const std::vector<std::uint8_t>& in, std::size_t offset) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(in[offset + i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw Error("write failed for " + path.string());
}

json synth_config_json(const SynthConfig& cfg) {
  return {{"identities", cfg.identities},
          {"images_per_identity", cfg.images_per_identity},
          {"test_identities", cfg.test_identities},
          {"height", cfg.height},
          {"width", cfg.width},
          {"channels", cfg.channels},
          {"parts", cfg.parts},
          {"palette", cfg.palette},
          {"texture_scale", cfg.texture_scale},
          {"jitter", cfg.jitter},
          {"noise", cfg.noise},
          {"seed", cfg.seed}};
}

}  // namespace

std::size_t TensorData::element_count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_tensor(const TensorData& t) {
  if (t.dims.empty() || t.dims.size() > std::numeric_limits<std::uint16_t>::max())
    throw DimensionError("tensor rank must be in [1, 65535]");
  for (auto d : t.dims)
    if (d == 0) throw DimensionError("tensor dims must be positive");
  if (t.values.size() != t.element_count())
    throw DimensionError("tensor payload length does not match dims");

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint16_t>(out, kTensorFormatVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.dims.size()));
  for (auto d : t.dims) put_le<std::uint32_t>(out, d);
  out.push_back(static_cast<std::uint8_t>(t.precision));
  out.reserve(out.size() + t.values.size() * static_cast<std::size_t>(t.precision));
  for (double v : t.values) {
    if (t.precision == Precision::kFloat32)
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    else
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

TensorData decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw FormatError("truncated tensor header", bytes.size());
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
    throw FormatError("bad magic, expected WBCT", 0);
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kTensorFormatVersion)
    throw FormatError("unsupported tensor format version " + std::to_string(version), 4);
  const auto rank = get_le<std::uint16_t>(bytes, 6);
  if (rank == 0) throw FormatError("tensor rank must be at least 1", 6);
  const std::size_t dims_end = 8 + 4 * std::size_t{rank};
  if (bytes.size() < dims_end + 1) throw FormatError("truncated tensor dims", bytes.size());

  TensorData t;
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t off = 8 + 4 * i;
    const auto d = get_le<std::uint32_t>(bytes, off);
    if (d == 0) throw FormatError("zero-length dimension", off);
    if (count > std::numeric_limits<std::size_t>::max() / 8 / d)
      throw FormatError("dimension product overflows", off);
    count *= d;
    t.dims.push_back(d);
  }
  const std::uint8_t flag = bytes[dims_end];
  if (flag != 4 && flag != 8)
    throw FormatError("element width flag must be 4 or 8, got " + std::to_string(flag), dims_end);
  t.precision = static_cast<Precision>(flag);

  const std::size_t payload = dims_end + 1;
  const std::size_t expected = payload + count * flag;
  if (bytes.size() < expected)
    throw FormatError("truncated payload: need " + std::to_string(expected) + " bytes, have " +
                          std::to_string(bytes.size()),
                      bytes.size());
  if (bytes.size() > expected) throw FormatError("trailing bytes after payload", expected);

  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (flag == 4)
      t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, payload + 4 * i));
    else
      t.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, payload + 8 * i));
  }
  return t;
}

void write_tensor(const fs::path& path, const TensorData& t) {
  write_bytes(path, encode_tensor(t));
}

TensorData read_tensor(const fs::path& path) { return decode_tensor(read_bytes(path)); }

TensorData to_data(const Tensor3& t, Precision p) {
  return {{static_cast<std::uint32_t>(t.height()), static_cast<std::uint32_t>(t.width()),
           static_cast<std::uint32_t>(t.channels())},
          p,
          t.values()};
}

TensorData to_data(const Matrix& m, Precision p) {
  return {{static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
          p,
          m.values()};
}

TensorData to_data(const Vector& v, Precision p) {
  return {{static_cast<std::uint32_t>(v.size())}, p, v};
}

Tensor3 as_tensor3(const TensorData& d) {
  if (d.dims.size() != 3) throw DimensionError("expected a rank-3 tensor");
  return Tensor3(d.dims[0], d.dims[1], d.dims[2], d.values);
}

Matrix as_matrix(const TensorData& d) {
  if (d.dims.size() != 2) throw DimensionError("expected a rank-2 tensor");
  return Matrix(d.dims[0], d.dims[1], d.values);
}

Vector as_vector(const TensorData& d) {
  if (d.dims.size() != 1) throw DimensionError("expected a rank-1 tensor");
  return d.values;
}

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kProbe: return "probe";
    case Split::kGallery: return "gallery";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "probe") return Split::kProbe;
  if (s == "gallery") return Split::kGallery;
  throw FormatError("unknown split tag '" + s + "'", 0);
}

void validate_manifest(const DatasetManifest& m) {
  std::set<int> labels;
  std::map<std::string, Split> seen;
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const SampleEntry& e = m.samples[i];
    if (e.label < 0) throw FormatError("negative label in sample " + std::to_string(i), 0);
    labels.insert(e.label);
    auto [it, fresh] = seen.emplace(e.path, e.split);
    if (!fresh && it->second != e.split)
      throw FormatError("sample '" + e.path + "' listed in both " + split_name(it->second) +
                            " and " + split_name(e.split),
                        0);
  }
  int expect = 0;
  for (int y : labels) {
    if (y != expect)
      throw FormatError("identity labels are not contiguous: missing " + std::to_string(expect),
                        0);
    ++expect;
  }
}

void write_manifest(const fs::path& path, const DatasetManifest& m) {
  validate_manifest(m);
  json doc;
  doc["format"] = "wbc-dataset";
  doc["version"] = 1;
  doc["generator"] = json::parse(m.generator_json.empty() ? "{}" : m.generator_json);
  json samples = json::array();
  for (const SampleEntry& e : m.samples)
    samples.push_back({{"path", e.path}, {"label", e.label}, {"split", split_name(e.split)}});
  doc["samples"] = std::move(samples);
  const std::string text = doc.dump(2) + "\n";
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

DatasetManifest read_manifest(const fs::path& path) {
  const auto bytes = read_bytes(path);
  json doc;
  try {
    doc = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  DatasetManifest m;
  try {
    if (doc.at("format").get<std::string>() != "wbc-dataset")
      throw FormatError("manifest format tag is not wbc-dataset", 0);
    m.generator_json = doc.value("generator", json::object()).dump();
    for (const json& s : doc.at("samples"))
      m.samples.push_back({s.at("path").get<std::string>(), s.at("label").get<int>(),
                           parse_split(s.at("split").get<std::string>())});
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what(), 0);
  }
  validate_manifest(m);
  return m;
}

std::size_t Dataset::identity_count() const {
  std::set<int> ids;
  for (const auto* part : {&train, &probe, &gallery})
    for (const Sample& s : *part) ids.insert(s.label);
  return ids.size();
}

Dataset load_dataset(const fs::path& root) {
  const DatasetManifest m = read_manifest(root / kManifestName);
  Dataset d;
  for (const SampleEntry& e : m.samples) {
    Sample s{as_tensor3(read_tensor(root / e.path)), e.label};
    switch (e.split) {
      case Split::kTrain: d.train.push_back(std::move(s)); break;
      case Split::kProbe: d.probe.push_back(std::move(s)); break;
      case Split::kGallery: d.gallery.push_back(std::move(s)); break;
    }
  }
  return d;
}

void resplit_held_in(const std::vector<Sample>& samples, std::vector<Sample>& probe,
                     std::vector<Sample>& gallery) {
  std::map<int, std::size_t> counts;
  for (const Sample& s : samples) ++counts[s.label];
  std::set<int> probed;
  for (const Sample& s : samples) {
    if (counts[s.label] < 2) continue;
    if (probed.insert(s.label).second)
      probe.push_back(s);
    else
      gallery.push_back(s);
  }
}

void validate_synth_config(const SynthConfig& cfg) {
  auto fail = [](const std::string& why) { throw ConfigError("synth: " + why); };
  if (cfg.identities < 2) fail("need at least 2 identities");
  if (cfg.images_per_identity < 1) fail("images_per_identity must be >= 1");
  if (cfg.test_identities >= cfg.identities) fail("test_identities must leave training identities");
  if (cfg.test_identities > 0 && cfg.images_per_identity < 2)
    fail("test identities need >= 2 images for a probe/gallery split");
  if (cfg.height == 0 || cfg.width == 0 || cfg.channels == 0) fail("grid dims must be positive");
  if (cfg.parts == 0) fail("parts must be >= 1");
  if (cfg.palette == 0) fail("palette must be >= 1");
  if (cfg.jitter >= cfg.height || cfg.jitter >= cfg.width) fail("jitter must be below grid size");
  if (2 * cfg.jitter >= cfg.width) fail("jitter leaves no room for the figure horizontally");
  if (cfg.height < 2 * cfg.jitter + cfg.parts)
    fail("grid height cannot hold " + std::to_string(cfg.parts) + " parts with jitter " +
         std::to_string(cfg.jitter));
  if (!(cfg.noise >= 0.0)) fail("noise must be >= 0");
  if (!(cfg.texture_scale >= 0.0)) fail("texture_scale must be >= 0");
}

std::vector<IdentitySignature> synth_signatures(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  Rng rng = derive_rng(cfg.seed, 1);
  std::vector<Vector> palette(cfg.palette, Vector(cfg.channels));
  for (Vector& colour : palette)
    for (double& v : colour) v = gaussian(rng, 1.0);
  std::vector<IdentitySignature> sigs(cfg.identities);
  for (IdentitySignature& sig : sigs) {
    for (std::size_t b = 0; b < cfg.parts; ++b) {
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, cfg.palette - 1)(rng);
      sig.part_means.push_back(palette[pick]);
      Vector tex(cfg.channels);
      for (double& v : tex) v = gaussian(rng, cfg.texture_scale);
      sig.part_textures.push_back(std::move(tex));
    }
  }
  return sigs;
}

Tensor3 synth_render(const SynthConfig& cfg, const IdentitySignature& sig, int dy, int dx,
                     Rng& rng) {
  const auto j = static_cast<int>(cfg.jitter);
  const int h = static_cast<int>(cfg.height);
  const int w = static_cast<int>(cfg.width);
  // Canonical figure box sits `jitter` pixels inside the grid; pixels outside
  // the shifted box repeat its nearest edge, so a shift only moves boundaries.
  const int fig_h = h - 2 * j;
  const int fig_w = w - 2 * j;
  Tensor3 img(cfg.height, cfg.width, cfg.channels);
  for (int p = 0; p < h; ++p) {
    const int fy = std::clamp(p - j - dy, 0, fig_h - 1);
    const auto part = static_cast<std::size_t>(fy) * cfg.parts / static_cast<std::size_t>(fig_h);
    const Vector& mean = sig.part_means[part];
    const Vector& tex = sig.part_textures[part];
    for (int q = 0; q < w; ++q) {
      const int fx = std::clamp(q - j - dx, 0, fig_w - 1);
      // Smooth horizontal ramp so small shifts change pixels only slightly.
      const double phase = fig_w > 1 ? 2.0 * fx / (fig_w - 1) - 1.0 : 0.0;
      for (std::size_t c = 0; c < cfg.channels; ++c)
        img(static_cast<std::size_t>(p), static_cast<std::size_t>(q), c) = mean[c] + phase * tex[c];
    }
  }
  if (cfg.noise > 0.0)
    for (double& v : img.values()) v += gaussian(rng, cfg.noise);
  return img;
}

SynthOutput synth_generate(const SynthConfig& cfg) {
  const auto sigs = synth_signatures(cfg);
  Rng rng = derive_rng(cfg.seed, 2);
  const auto j = static_cast<int>(cfg.jitter);
  std::uniform_int_distribution<int> shift(-j, j);
  SynthOutput out;
  out.manifest.generator_json = synth_config_json(cfg).dump();
  const std::size_t first_test = cfg.identities - cfg.test_identities;
  std::size_t index = 0;
  for (std::size_t id = 0; id < cfg.identities; ++id) {
    for (std::size_t k = 0; k < cfg.images_per_identity; ++k, ++index) {
      const int dy = shift(rng);
      const int dx = shift(rng);
      Tensor3 img = synth_render(cfg, sigs[id], dy, dx, rng);
      Split split = Split::kTrain;
      if (id >= first_test) split = k == 0 ? Split::kProbe : Split::kGallery;
      char name[32];
      std::snprintf(name, sizeof(name), "tensors/%06zu.wbct", index);
      out.manifest.samples.push_back({name, static_cast<int>(id), split});
      out.samples.push_back({std::move(img), static_cast<int>(id)});
    }
  }
  return out;
}

DatasetManifest synth_write(const SynthConfig& cfg, const fs::path& root) {
  SynthOutput out = synth_generate(cfg);
  for (std::size_t i = 0; i < out.samples.size(); ++i)
    write_tensor(root / out.manifest.samples[i].path, to_data(out.samples[i].image));
  write_manifest(root / kManifestName, out.manifest);
  return out.manifest;
}

double raw_pixel_rank1(const std::vector<Sample>& samples) {
  if (samples.size() < 2) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = i;
    const auto& a = samples[i].image.values();
    for (std::size_t k = 0; k < samples.size(); ++k) {
      if (k == i) continue;
      const auto& b = samples[k].image.values();
      double d = 0.0;
      for (std::size_t t = 0; t < a.size(); ++t) d += (a[t] - b[t]) * (a[t] - b[t]);
      if (d < best) {
        best = d;
        arg = k;
      }
    }
    if (samples[arg].label == samples[i].label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace wbc
