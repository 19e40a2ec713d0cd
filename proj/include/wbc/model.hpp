#pragma once

// End-to-end descriptor network: toy backbone -> feature map -> (part masks)
// -> per-part aggregation -> embedding -> normalized concatenation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wbc/aggregation.hpp"
#include "wbc/partnet.hpp"
#include "wbc/tensor.hpp"

namespace wbc {

/// The four aggregation pipelines compared in the ablation.
enum class Variant {
  kGap,      // global average pooling, no part net
  kGapPart,  // mask-weighted average pooling per part
  kBc,       // bilinear coding, no part net
  kWbcPart,  // weighted bilinear coding per part
};

std::string_view variant_name(Variant v);
/// Accepts GAP, GAP_PART, BC, WBC_PART; throws ConfigError listing them otherwise.
Variant parse_variant(std::string_view name);
bool uses_parts(Variant v);
bool uses_bilinear(Variant v);

struct ModelConfig {
  Variant variant = Variant::kWbcPart;
  std::size_t parts = 3;           // L, ignored by global variants
  std::size_t channels = 16;       // C of the aggregated feature map
  std::size_t embed_dim = 128;     // D per part
  std::size_t hidden = 16;         // backbone 3x3 conv output channels
  std::size_t input_channels = 3;  // c_in of raster samples
  /// false: samples are already H x W x C feature maps (backbone bypass).
  bool use_backbone = true;
  std::uint64_t seed = 1;

  std::size_t part_count() const { return uses_parts(variant) ? parts : 1; }
  std::size_t feature_dim() const { return part_count() * embed_dim; }
  std::size_t pooled_dim() const { return uses_bilinear(variant) ? channels * channels : channels; }
};

void validate_model_config(const ModelConfig& cfg);

/// 3x3 stride-2 convolution (zero padding 1) -> ReLU -> 1x1 convolution.
struct BackboneParams {
  Matrix conv1_weight;  // hidden x (3 * 3 * c_in), column (ky * 3 + kx) * c_in + c
  Vector conv1_bias;    // hidden
  Matrix conv2_weight;  // C x hidden
  Vector conv2_bias;    // C
};

/// Named view of one parameter tensor.
struct ParamBlock {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::span<double> values;
};

struct ConstParamBlock {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::span<const double> values;
};

struct ModelParams {
  ModelConfig config;
  BackboneParams backbone;  // empty when the backbone is bypassed
  PartNetParams part_net;   // empty for global variants
  std::vector<EmbeddingParams> embeddings;  // one per part
  /// Bumped on every in-place update; forward caches record it.
  std::uint64_t version = 0;

  std::vector<ParamBlock> blocks();
  std::vector<ConstParamBlock> blocks() const;
  std::size_t parameter_count() const;

  /// Same layout, all zeros.
  ModelParams zeros_like() const;
  Vector flatten() const;
  void assign_flat(std::span<const double> flat);
};

/// Seeded initialization of every block the variant uses.
ModelParams init_model(const ModelConfig& cfg);

struct ForwardCache {
  std::uint64_t params_version = 0;
  Variant variant = Variant::kGap;
  Tensor3 input;
  Tensor3 hidden_pre;  // conv1 output before ReLU
  Tensor3 features;    // F
  std::vector<PartMask> masks;
  std::vector<Vector> codes;   // flattened bilinear codes, before signed sqrt
  std::vector<Vector> pooled;  // embedding inputs
  Vector raw;                  // concatenation before normalization
  FinalFeature feature;
};

Tensor3 backbone_forward(const Tensor3& input, const BackboneParams& bb, Tensor3* hidden_pre);

ForwardCache forward(const Tensor3& sample, const ModelParams& params);

/// Parameter gradients for dL/d(feature). Throws ContractError when the
/// cache predates the current parameter version or variant.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const double> d_feature);

/// Checkpoint directory: checkpoint.json manifest + one tensor file per block.
void save_checkpoint(const std::filesystem::path& dir, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& dir);

inline constexpr const char* kCheckpointManifest = "checkpoint.json";

}  // namespace wbc
