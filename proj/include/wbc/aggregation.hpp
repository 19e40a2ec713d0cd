#pragma once

// Local-feature aggregation: global average pooling, (weighted) bilinear
// coding, signed square root, linear embedding and the normalized
// concatenation that produces the final descriptor. Every forward op has a
// hand-derived backward counterpart.

#include <cstddef>
#include <span>
#include <vector>

#include "wbc/part_mask.hpp"
#include "wbc/random.hpp"
#include "wbc/tensor.hpp"

namespace wbc {

/// C x C sum of per-location outer products. Symmetric and PSD by construction.
class BilinearCode {
 public:
  explicit BilinearCode(Matrix m) : matrix_(std::move(m)) {}

  std::size_t channels() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  /// Row-major reshape to a C^2 vector.
  const Vector& flat() const { return matrix_.values(); }

 private:
  Matrix matrix_;
};

/// Linear map without bias, weight is D x inputDim.
struct EmbeddingParams {
  Matrix weight;

  std::size_t output_dim() const { return weight.rows(); }
  std::size_t input_dim() const { return weight.cols(); }

  /// Uniform in [-a, a], a = sqrt(6 / (inputDim + outputDim)).
  static EmbeddingParams init(std::size_t input_dim, std::size_t output_dim, Rng& rng);
};

/// L2-normalized concatenation of per-part embeddings.
struct FinalFeature {
  Vector values;
  std::size_t part_count = 1;
  std::size_t part_dim = 0;
};

inline constexpr double kSignedSqrtDelta = 1e-12;
inline constexpr double kNormEpsilon = 1e-12;

Vector gap(const Tensor3& f);
Tensor3 gap_backward(const Tensor3& f, std::span<const double> d_out);

BilinearCode bilinear_code(const Tensor3& f);
BilinearCode weighted_bilinear_code(const PartMask& m, const Tensor3& f);

struct WbcGrads {
  Vector d_mask;  // one entry per location
  Tensor3 d_features;
};

WbcGrads wbc_backward(const PartMask& m, const Tensor3& f, const Matrix& d_code);
Tensor3 bilinear_code_backward(const Tensor3& f, const Matrix& d_code);

Vector signed_sqrt(std::span<const double> v);
Vector signed_sqrt_backward(std::span<const double> v, std::span<const double> d_out);

Vector embed(std::span<const double> v, const EmbeddingParams& params);

struct EmbedGrads {
  Vector d_input;
  Matrix d_weight;
};

EmbedGrads embed_backward(std::span<const double> v, const EmbeddingParams& params,
                          std::span<const double> d_out);

/// weighted bilinear code -> row-major flatten -> signed sqrt -> embedding.
Vector encode_part(const PartMask& m, const Tensor3& f, const EmbeddingParams& params);

FinalFeature concat_normalize(std::span<const Vector> parts);
/// Gradient w.r.t. the unnormalized concatenation `raw` given dL/d(output).
Vector l2_normalize_backward(std::span<const double> raw, std::span<const double> d_out);

/// Mask-weighted mean sum(m F) / sum(m), the first-order part pooling.
Vector masked_mean(const PartMask& m, const Tensor3& f);

struct MaskedMeanGrads {
  Vector d_mask;
  Tensor3 d_features;
};

MaskedMeanGrads masked_mean_backward(const PartMask& m, const Tensor3& f,
                                     std::span<const double> d_out);

}  // namespace wbc
