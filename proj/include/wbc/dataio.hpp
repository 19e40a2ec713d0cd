#pragma once

// Binary tensor container, dataset manifests and the synthetic
// misaligned-identity generator.
//
// Tensor file layout (all integers little-endian):
//   offset 0        4 bytes  magic "WBCT"
//   offset 4        u16      format version (1)
//   offset 6        u16      rank r (>= 1)
//   offset 8        u32 x r  dims, each >= 1
//   offset 8 + 4r   u8       element width in bytes: 4 (float32) or 8 (float64)
//   offset 9 + 4r   payload  prod(dims) IEEE-754 values, little-endian, row-major

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbc/random.hpp"
#include "wbc/tensor.hpp"

namespace wbc {

enum class Precision : std::uint8_t { kFloat32 = 4, kFloat64 = 8 };

struct TensorData {
  std::vector<std::uint32_t> dims;
  Precision precision = Precision::kFloat64;
  std::vector<double> values;

  std::size_t element_count() const;
};

inline constexpr std::uint16_t kTensorFormatVersion = 1;

std::vector<std::uint8_t> encode_tensor(const TensorData& t);
TensorData decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const TensorData& t);
TensorData read_tensor(const std::filesystem::path& path);

TensorData to_data(const Tensor3& t, Precision p = Precision::kFloat64);
TensorData to_data(const Matrix& m, Precision p = Precision::kFloat64);
TensorData to_data(const Vector& v, Precision p = Precision::kFloat64);
Tensor3 as_tensor3(const TensorData& d);
Matrix as_matrix(const TensorData& d);
Vector as_vector(const TensorData& d);

enum class Split { kTrain, kProbe, kGallery };

const char* split_name(Split s);
Split parse_split(const std::string& s);

struct SampleEntry {
  std::string path;  // relative to the dataset root
  int label = 0;
  Split split = Split::kTrain;
};

struct Sample {
  Tensor3 image;
  int label = 0;
};

struct DatasetManifest {
  std::vector<SampleEntry> samples;
  std::string generator_json;  // echo of the generating config, "{}" if none
};

/// Checks label contiguity and probe/gallery disjointness; throws FormatError.
void validate_manifest(const DatasetManifest& m);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.json";

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> probe;
  std::vector<Sample> gallery;

  std::size_t identity_count() const;
};

/// Loads `<root>/manifest.json` and every tensor it lists.
Dataset load_dataset(const std::filesystem::path& root);

/// First image of every identity becomes a probe, the rest the gallery.
/// Identities with a single image are skipped.
void resplit_held_in(const std::vector<Sample>& samples, std::vector<Sample>& probe,
                     std::vector<Sample>& gallery);

struct SynthConfig {
  std::size_t identities = 8;
  std::size_t images_per_identity = 6;
  /// Trailing identities reserved for probe/gallery instead of training.
  std::size_t test_identities = 0;
  std::size_t height = 16;
  std::size_t width = 8;
  std::size_t channels = 3;
  std::size_t parts = 3;
  /// Number of shared band colours; identities draw part means from it.
  std::size_t palette = 4;
  double texture_scale = 0.6;
  std::size_t jitter = 2;
  double noise = 0.05;
  std::uint64_t seed = 1;
};

/// Per-identity appearance: one mean colour and one texture vector per part.
struct IdentitySignature {
  std::vector<Vector> part_means;
  std::vector<Vector> part_textures;
};

void validate_synth_config(const SynthConfig& cfg);
std::vector<IdentitySignature> synth_signatures(const SynthConfig& cfg);
/// One rendered image, jittered by (dy, dx) with additive noise.
Tensor3 synth_render(const SynthConfig& cfg, const IdentitySignature& sig, int dy, int dx,
                     Rng& rng);

struct SynthOutput {
  DatasetManifest manifest;
  std::vector<Sample> samples;  // manifest order
};

SynthOutput synth_generate(const SynthConfig& cfg);
/// Generates and writes manifest + tensor files under `root`.
DatasetManifest synth_write(const SynthConfig& cfg, const std::filesystem::path& root);

/// Leave-one-out nearest-neighbour rank-1 in raw pixel space.
double raw_pixel_rank1(const std::vector<Sample>& samples);

}  // namespace wbc
