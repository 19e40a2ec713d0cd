#include "wbc/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>

#include "wbc/aggregation.hpp"
#include "wbc/loss.hpp"
#include "wbc/model.hpp"
#include "wbc/partnet.hpp"
#include "wbc/random.hpp"

namespace wbc {

namespace {

struct Comparison {
  Vector analytic;
  Vector numeric;
};

using Check = std::function<std::optional<Comparison>(Rng&, const GradcheckOptions&)>;

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

Vector random_vector(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  Vector v(n);
  for (double& x : v) x = uniform(rng, lo, hi);
  return v;
}

Tensor3 random_tensor(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  return Tensor3(h, w, c, random_vector(rng, h * w * c));
}

void append(Vector& dst, std::span<const double> src) { dst.insert(dst.end(), src.begin(), src.end()); }

std::optional<Comparison> check_wbc(Rng& rng, const GradcheckOptions& o) {
  const std::size_t h = pick(rng, 1, o.max_hw), w = pick(rng, 1, o.max_hw), c = pick(rng, 1, o.max_c);
  const Vector mask = random_vector(rng, h * w, 0.05, 0.95);
  const Tensor3 f = random_tensor(rng, h, w, c);
  const Matrix d_code(c, c, random_vector(rng, c * c));
  const std::size_t nm = h * w;
  auto objective = [&](std::span<const double> x) {
    const PartMask m(h, w, Vector(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nm)));
    const Tensor3 ff(h, w, c, Vector(x.begin() + static_cast<std::ptrdiff_t>(nm), x.end()));
    return dot(weighted_bilinear_code(m, ff).flat(), d_code.values());
  };
  Vector x = mask;
  append(x, f.values());
  const WbcGrads g = wbc_backward(PartMask(h, w, mask), f, d_code);
  Comparison cmp;
  append(cmp.analytic, g.d_mask);
  append(cmp.analytic, g.d_features.values());
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_signed_sqrt(Rng& rng, const GradcheckOptions& o) {
  const std::size_t n = pick(rng, 1, o.max_c * o.max_c);
  Vector v(n);
  for (double& x : v) x = uniform(rng, 0.1, 2.0) * (uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0);
  const Vector r = random_vector(rng, n);
  auto objective = [&](std::span<const double> x) { return dot(signed_sqrt(x), r); };
  return Comparison{signed_sqrt_backward(v, r), finite_diff_grad(objective, v, o.eps)};
}

std::optional<Comparison> check_embed(Rng& rng, const GradcheckOptions& o) {
  const std::size_t c = pick(rng, 1, o.max_c);
  const std::size_t k = c * c, d = pick(rng, 1, o.max_d);
  const Vector v = random_vector(rng, k);
  const EmbeddingParams p{Matrix(d, k, random_vector(rng, d * k))};
  const Vector r = random_vector(rng, d);
  auto objective = [&](std::span<const double> x) {
    const EmbeddingParams pp{Matrix(d, k, Vector(x.begin() + static_cast<std::ptrdiff_t>(k), x.end()))};
    return dot(embed(x.subspan(0, k), pp), r);
  };
  Vector x = v;
  append(x, p.weight.values());
  const EmbedGrads g = embed_backward(v, p, r);
  Comparison cmp;
  append(cmp.analytic, g.d_input);
  append(cmp.analytic, g.d_weight.values());
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_partnet(Rng& rng, const GradcheckOptions& o) {
  const std::size_t h = pick(rng, 1, o.max_hw), w = pick(rng, 1, o.max_hw);
  const std::size_t c = pick(rng, 1, o.max_c), l = pick(rng, 1, o.max_parts);
  const Tensor3 f = random_tensor(rng, h, w, c);
  const PartNetParams p{Matrix(l, c, random_vector(rng, l * c)), random_vector(rng, l)};
  std::vector<Vector> d_masks;
  for (std::size_t b = 0; b < l; ++b) d_masks.push_back(random_vector(rng, h * w));
  const std::size_t nf = f.size();
  auto objective = [&](std::span<const double> x) {
    const Tensor3 ff(h, w, c, Vector(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nf)));
    const auto wspan = x.subspan(nf, l * c);
    const PartNetParams pp{Matrix(l, c, Vector(wspan.begin(), wspan.end())),
                           Vector(x.begin() + static_cast<std::ptrdiff_t>(nf + l * c), x.end())};
    const auto masks = generate_masks(ff, pp);
    double s = 0.0;
    for (std::size_t b = 0; b < l; ++b) s += dot(masks[b].values(), d_masks[b]);
    return s;
  };
  Vector x = f.values();
  append(x, p.weights.values());
  append(x, p.biases);
  const PartNetGrads g = partnet_backward(f, p, d_masks);
  Comparison cmp;
  append(cmp.analytic, g.d_features.values());
  append(cmp.analytic, g.d_params.weights.values());
  append(cmp.analytic, g.d_params.biases);
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_triplet(Rng& rng, const GradcheckOptions& o) {
  const std::size_t n = pick(rng, 1, o.max_parts * o.max_d);
  const Vector fi = random_vector(rng, n), fj = random_vector(rng, n), fk = random_vector(rng, n);
  const LossConfig cfg;
  const double d_ij = euclid_dist(fi, fj), d_ik = euclid_dist(fi, fk);
  // Active case only, away from the hinge kink and the distance singularity.
  if (d_ij - d_ik + cfg.margin < 1e-3 || d_ij < 1e-3 || d_ik < 1e-3) return std::nullopt;
  auto objective = [&](std::span<const double> x) {
    return triplet_hinge(x.subspan(0, n), x.subspan(n, n), x.subspan(2 * n, n), cfg);
  };
  Vector x = fi;
  append(x, fj);
  append(x, fk);
  const TripletGrads g = triplet_hinge_backward(fi, fj, fk, cfg, 1.0);
  Comparison cmp;
  append(cmp.analytic, g.d_anchor);
  append(cmp.analytic, g.d_positive);
  append(cmp.analytic, g.d_negative);
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_batch_loss(Rng& rng, const GradcheckOptions& o) {
  const std::size_t n = pick(rng, 4, 8), dim = pick(rng, 2, o.max_parts * o.max_d);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2 == 0 ? i % 3 : (i + 1) % 3);
  std::vector<Vector> feats;
  for (std::size_t i = 0; i < n; ++i) feats.push_back(random_vector(rng, dim));
  const LossConfig cfg;
  for (const Triplet& t : mine_triplets(labels, cfg)) {
    const double arg = euclid_dist(feats[t.anchor], feats[t.positive]) -
                       euclid_dist(feats[t.anchor], feats[t.negative]) + cfg.margin;
    if (std::abs(arg) < 1e-4) return std::nullopt;
  }
  auto unpack = [&](std::span<const double> x) {
    std::vector<Vector> fs;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = x.subspan(i * dim, dim);
      fs.emplace_back(s.begin(), s.end());
    }
    return fs;
  };
  Vector x;
  for (const Vector& f : feats) append(x, f);
  auto objective = [&](std::span<const double> xx) { return batch_loss(unpack(xx), labels, cfg).loss; };
  const BatchLoss bl = batch_loss(feats, labels, cfg);
  Comparison cmp;
  for (const Vector& g : bl.d_features) append(cmp.analytic, g);
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_masked_mean(Rng& rng, const GradcheckOptions& o) {
  const std::size_t h = pick(rng, 1, o.max_hw), w = pick(rng, 1, o.max_hw), c = pick(rng, 1, o.max_c);
  const Vector mask = random_vector(rng, h * w, 0.05, 0.95);
  const Tensor3 f = random_tensor(rng, h, w, c);
  const Vector r = random_vector(rng, c);
  const std::size_t nm = h * w;
  auto objective = [&](std::span<const double> x) {
    const PartMask m(h, w, Vector(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(nm)));
    const Tensor3 ff(h, w, c, Vector(x.begin() + static_cast<std::ptrdiff_t>(nm), x.end()));
    return dot(masked_mean(m, ff), r);
  };
  Vector x = mask;
  append(x, f.values());
  const MaskedMeanGrads g = masked_mean_backward(PartMask(h, w, mask), f, r);
  Comparison cmp;
  append(cmp.analytic, g.d_mask);
  append(cmp.analytic, g.d_features.values());
  cmp.numeric = finite_diff_grad(objective, x, o.eps);
  return cmp;
}

std::optional<Comparison> check_l2_normalize(Rng& rng, const GradcheckOptions& o) {
  const std::size_t n = pick(rng, 2, o.max_parts * o.max_d);
  const Vector raw = random_vector(rng, n);
  if (norm2(raw) < 1e-2) return std::nullopt;
  const Vector r = random_vector(rng, n);
  auto objective = [&](std::span<const double> x) {
    const std::vector<Vector> parts{Vector(x.begin(), x.end())};
    return dot(concat_normalize(parts).values, r);
  };
  return Comparison{l2_normalize_backward(raw, r), finite_diff_grad(objective, raw, o.eps)};
}

Check model_check(Variant variant) {
  return [variant](Rng& rng, const GradcheckOptions& o) -> std::optional<Comparison> {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.parts = pick(rng, 1, o.max_parts);
    cfg.channels = pick(rng, 1, o.max_c);
    cfg.embed_dim = pick(rng, 1, o.max_d);
    cfg.hidden = pick(rng, 2, 4);
    cfg.input_channels = pick(rng, 1, 3);
    cfg.seed = rng();
    const std::size_t fh = pick(rng, 1, o.max_hw), fw = pick(rng, 1, o.max_hw);
    // A 1-dimensional normalized feature is constant (+-1): zero gradient.
    if (cfg.feature_dim() < 2) return std::nullopt;
    ModelParams params = init_model(cfg);
    // Biases away from zero so every parameter receives gradient.
    for (auto& b : params.blocks())
      if (b.name.ends_with("bias"))
        for (double& v : b.values) v = uniform(rng, -0.5, 0.5);
    const Tensor3 image = random_tensor(rng, 2 * fh, 2 * fw, cfg.input_channels);
    const ForwardCache cache = forward(image, params);

    // Reject instances within reach of a ReLU kink or the signed-sqrt cusp.
    for (double v : cache.hidden_pre.values())
      if (std::abs(v) < 1e-3) return std::nullopt;
    for (const Vector& code : cache.codes)
      for (double v : code)
        if (std::abs(v) < 1e-2) return std::nullopt;
    if (norm2(cache.raw) < 1e-2) return std::nullopt;

    const Vector r = random_vector(rng, cache.feature.values.size());
    const ModelParams grads = backward(params, cache, r);
    ModelParams probe = params;
    auto objective = [&](std::span<const double> x) {
      probe.assign_flat(x);
      return dot(forward(image, probe).feature.values, r);
    };
    return Comparison{grads.flatten(), finite_diff_grad(objective, params.flatten(), o.eps)};
  };
}

struct NamedCheck {
  std::string name;
  Check run;
};

std::vector<NamedCheck> all_checks() {
  return {
      {"wbc_backward", check_wbc},
      {"signed_sqrt_backward", check_signed_sqrt},
      {"embed_backward", check_embed},
      {"partnet_backward", check_partnet},
      {"triplet_hinge_backward", check_triplet},
      {"batch_loss", check_batch_loss},
      {"masked_mean_backward", check_masked_mean},
      {"l2_normalize_backward", check_l2_normalize},
      {"model_backward[GAP]", model_check(Variant::kGap)},
      {"model_backward[GAP_PART]", model_check(Variant::kGapPart)},
      {"model_backward[BC]", model_check(Variant::kBc)},
      {"model_backward[WBC_PART]", model_check(Variant::kWbcPart)},
  };
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
  std::vector<std::string> names;
  for (const auto& c : all_checks()) names.push_back(c.name);
  return names;
}

std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions& opts) {
  constexpr std::size_t kMaxAttempts = 1000;
  std::vector<GradcheckRow> rows;
  const auto checks = all_checks();
  for (std::size_t ci = 0; ci < checks.size(); ++ci) {
    Rng rng = derive_rng(opts.seed, 1000 + ci);
    GradcheckRow row{checks[ci].name, 0, 0.0, true};
    for (std::size_t inst = 0; inst < opts.instances; ++inst) {
      std::optional<Comparison> cmp;
      for (std::size_t attempt = 0; attempt < kMaxAttempts && !cmp; ++attempt)
        cmp = checks[ci].run(rng, opts);
      if (!cmp) {
        row.pass = false;
        break;
      }
      if (checks[ci].name == opts.corrupt_op)
        for (double& g : cmp->analytic) g *= 1.01;
      const double err = relative_error(cmp->analytic, cmp->numeric);
      row.max_relative_error = std::max(row.max_relative_error, err);
      if (!(err < opts.tolerance)) row.pass = false;
      ++row.instances;
    }
    rows.push_back(row);
  }
  return rows;
}

void print_gradcheck_table(std::ostream& os, const std::vector<GradcheckRow>& rows) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-28s %9s %14s  %s\n", "op", "instances", "max_rel_err",
                "result");
  os << buf;
  for (const GradcheckRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-28s %9zu %14.3e  %s\n", r.op.c_str(), r.instances,
                  r.max_relative_error, r.pass ? "PASS" : "FAIL");
    os << buf;
  }
}

}  // namespace wbc
