#include "wbc/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace wbc {

namespace {

void require_mask_shape(const PartMask& m, const Tensor3& f, const char* op) {
  if (!m.matches(f))
    throw DimensionError(std::string(op) + ": mask " + std::to_string(m.height()) + "x" +
                         std::to_string(m.width()) + " does not match feature map " +
                         std::to_string(f.height()) + "x" + std::to_string(f.width()));
}

// B += g^T g for one local feature row vector g.
void accumulate_outer(Matrix& b, std::span<const double> g) {
  const std::size_t c = g.size();
  for (std::size_t i = 0; i < c; ++i) {
    auto row = b.row(i);
    for (std::size_t j = 0; j < c; ++j) row[j] += g[i] * g[j];
  }
}

// (dB + dB^T) g
Vector symmetric_apply(const Matrix& d_code, std::span<const double> g) {
  const std::size_t c = g.size();
  Vector out(c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (d_code(i, j) + d_code(j, i)) * g[j];
    out[i] = s;
  }
  return out;
}

void require_code_shape(const Matrix& d_code, std::size_t c) {
  if (d_code.rows() != c || d_code.cols() != c)
    throw DimensionError("bilinear gradient must be " + std::to_string(c) + "x" +
                         std::to_string(c));
}

}  // namespace

EmbeddingParams EmbeddingParams::init(std::size_t input_dim, std::size_t output_dim, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(input_dim + output_dim));
  Matrix w(output_dim, input_dim);
  for (double& v : w.values()) v = uniform(rng, -a, a);
  return {std::move(w)};
}

Vector gap(const Tensor3& f) {
  const std::size_t c = f.channels();
  Vector out(c, 0.0);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto px = f.pixel(loc);
    for (std::size_t k = 0; k < c; ++k) out[k] += px[k];
  }
  const double inv = 1.0 / static_cast<double>(f.locations());
  for (double& v : out) v *= inv;
  return out;
}

Tensor3 gap_backward(const Tensor3& f, std::span<const double> d_out) {
  if (d_out.size() != f.channels()) throw DimensionError("gap_backward: channel mismatch");
  Tensor3 d(f.height(), f.width(), f.channels());
  const double inv = 1.0 / static_cast<double>(f.locations());
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto px = d.pixel(loc);
    for (std::size_t k = 0; k < px.size(); ++k) px[k] = d_out[k] * inv;
  }
  return d;
}

BilinearCode bilinear_code(const Tensor3& f) {
  Matrix b(f.channels(), f.channels());
  for (std::size_t loc = 0; loc < f.locations(); ++loc) accumulate_outer(b, f.pixel(loc));
  return BilinearCode(std::move(b));
}

BilinearCode weighted_bilinear_code(const PartMask& m, const Tensor3& f) {
  require_mask_shape(m, f, "weighted_bilinear_code");
  const std::size_t c = f.channels();
  Matrix b(c, c);
  Vector g(c);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto px = f.pixel(loc);
    const double w = m.at(loc);
    for (std::size_t k = 0; k < c; ++k) g[k] = w * px[k];
    accumulate_outer(b, g);
  }
  return BilinearCode(std::move(b));
}

WbcGrads wbc_backward(const PartMask& m, const Tensor3& f, const Matrix& d_code) {
  require_mask_shape(m, f, "wbc_backward");
  const std::size_t c = f.channels();
  require_code_shape(d_code, c);
  WbcGrads grads{Vector(f.locations(), 0.0), Tensor3(f.height(), f.width(), c)};
  Vector g(c);
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    auto px = f.pixel(loc);
    const double w = m.at(loc);
    for (std::size_t k = 0; k < c; ++k) g[k] = w * px[k];
    // dL/dg = (dB + dB^T) g, then g = w f.
    const Vector dg = symmetric_apply(d_code, g);
    auto dpx = grads.d_features.pixel(loc);
    for (std::size_t k = 0; k < c; ++k) dpx[k] = w * dg[k];
    grads.d_mask[loc] = dot(px, dg);
  }
  return grads;
}

Tensor3 bilinear_code_backward(const Tensor3& f, const Matrix& d_code) {
  require_code_shape(d_code, f.channels());
  Tensor3 d(f.height(), f.width(), f.channels());
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    const Vector dg = symmetric_apply(d_code, f.pixel(loc));
    std::copy(dg.begin(), dg.end(), d.pixel(loc).begin());
  }
  return d;
}

Vector signed_sqrt(std::span<const double> v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double r = std::sqrt(std::abs(v[i]));
    out[i] = v[i] < 0.0 ? -r : r;
  }
  return out;
}

Vector signed_sqrt_backward(std::span<const double> v, std::span<const double> d_out) {
  if (v.size() != d_out.size()) throw DimensionError("signed_sqrt_backward: length mismatch");
  Vector d(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    d[i] = d_out[i] / (2.0 * std::sqrt(std::abs(v[i]) + kSignedSqrtDelta));
  return d;
}

Vector embed(std::span<const double> v, const EmbeddingParams& params) {
  if (v.size() != params.input_dim())
    throw DimensionError("embed: input length " + std::to_string(v.size()) + " != " +
                         std::to_string(params.input_dim()));
  Vector out(params.output_dim());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(params.weight.row(r), v);
  return out;
}

EmbedGrads embed_backward(std::span<const double> v, const EmbeddingParams& params,
                          std::span<const double> d_out) {
  if (v.size() != params.input_dim() || d_out.size() != params.output_dim())
    throw DimensionError("embed_backward: shape mismatch");
  EmbedGrads g{Vector(v.size(), 0.0), Matrix(params.output_dim(), params.input_dim())};
  for (std::size_t r = 0; r < d_out.size(); ++r) {
    auto w = params.weight.row(r);
    auto dw = g.d_weight.row(r);
    const double up = d_out[r];
    for (std::size_t k = 0; k < v.size(); ++k) {
      g.d_input[k] += w[k] * up;
      dw[k] = up * v[k];
    }
  }
  return g;
}

Vector encode_part(const PartMask& m, const Tensor3& f, const EmbeddingParams& params) {
  const BilinearCode code = weighted_bilinear_code(m, f);
  return embed(signed_sqrt(code.flat()), params);
}

FinalFeature concat_normalize(std::span<const Vector> parts) {
  if (parts.empty()) throw DimensionError("concat_normalize: no parts");
  const std::size_t d = parts.front().size();
  FinalFeature out;
  out.part_count = parts.size();
  out.part_dim = d;
  out.values.reserve(d * parts.size());
  for (const Vector& p : parts) {
    if (p.size() != d) throw DimensionError("concat_normalize: unequal part lengths");
    out.values.insert(out.values.end(), p.begin(), p.end());
  }
  const double n = std::max(norm2(out.values), kNormEpsilon);
  for (double& v : out.values) v /= n;
  return out;
}

Vector l2_normalize_backward(std::span<const double> raw, std::span<const double> d_out) {
  if (raw.size() != d_out.size()) throw DimensionError("l2_normalize_backward: length mismatch");
  const double n = norm2(raw);
  Vector d(raw.size());
  if (n <= kNormEpsilon) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = d_out[i] / kNormEpsilon;
    return d;
  }
  double proj = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) proj += raw[i] * d_out[i];
  proj /= n * n;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d_out[i] - raw[i] * proj) / n;
  return d;
}

Vector masked_mean(const PartMask& m, const Tensor3& f) {
  require_mask_shape(m, f, "masked_mean");
  const std::size_t c = f.channels();
  Vector out(c, 0.0);
  double mass = 0.0;
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    const double w = m.at(loc);
    auto px = f.pixel(loc);
    for (std::size_t k = 0; k < c; ++k) out[k] += w * px[k];
    mass += w;
  }
  mass = std::max(mass, kNormEpsilon);
  for (double& v : out) v /= mass;
  return out;
}

MaskedMeanGrads masked_mean_backward(const PartMask& m, const Tensor3& f,
                                     std::span<const double> d_out) {
  require_mask_shape(m, f, "masked_mean_backward");
  if (d_out.size() != f.channels()) throw DimensionError("masked_mean_backward: channel mismatch");
  double mass = 0.0;
  for (double w : m.values()) mass += w;
  mass = std::max(mass, kNormEpsilon);
  const Vector mean = masked_mean(m, f);
  const double mean_dot = dot(mean, d_out);
  MaskedMeanGrads g{Vector(f.locations(), 0.0), Tensor3(f.height(), f.width(), f.channels())};
  for (std::size_t loc = 0; loc < f.locations(); ++loc) {
    const double w = m.at(loc);
    auto px = f.pixel(loc);
    auto dpx = g.d_features.pixel(loc);
    for (std::size_t k = 0; k < px.size(); ++k) dpx[k] = w * d_out[k] / mass;
    g.d_mask[loc] = (dot(px, d_out) - mean_dot) / mass;
  }
  return g;
}

}  // namespace wbc
