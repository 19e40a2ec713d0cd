#include "wbc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <thread>

namespace wbc {

namespace {

std::size_t identities_per_batch(const SGDConfig& cfg) {
  return cfg.identities_per_batch != 0 ? cfg.identities_per_batch
                                       : cfg.batch_size / cfg.images_per_identity;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; each index is
// written by exactly one worker, so the outcome is thread-count independent.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

void accumulate(ModelParams& acc, const ModelParams& g) {
  auto a = acc.blocks();
  const auto b = g.blocks();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i].values.size(); ++k) a[i].values[k] += b[i].values[k];
}

const char* first_non_finite_block(const ModelParams& p, std::string& name) {
  for (const auto& b : p.blocks())
    if (!all_finite(b.values)) {
      name = b.name;
      return name.c_str();
    }
  return nullptr;
}

}  // namespace

SGDConfig SGDConfig::desk_scale() {
  SGDConfig c;
  c.batch_size = 32;
  c.identities_per_batch = 8;
  c.images_per_identity = 4;
  c.halve_period = 200;
  c.max_iters = 500;
  return c;
}

void validate_sgd_config(const SGDConfig& cfg) {
  if (!(cfg.initial_lr > 0.0)) throw ConfigError("sgd: initial_lr must be > 0");
  if (cfg.halve_period < 1) throw ConfigError("sgd: halve_period must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
    throw ConfigError("sgd: momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("sgd: weight_decay must be >= 0");
  if (cfg.images_per_identity < 2)
    throw ConfigError("sgd: images_per_identity (K) must be >= 2 so positives exist");
  const std::size_t p = identities_per_batch(cfg);
  if (p < 2) throw ConfigError("sgd: a batch needs >= 2 identities so negatives exist");
  if (p * cfg.images_per_identity != cfg.batch_size)
    throw ConfigError("sgd: batch_size " + std::to_string(cfg.batch_size) + " != P x K = " +
                      std::to_string(p) + " x " + std::to_string(cfg.images_per_identity));
}

double lr_schedule(std::size_t iter, const SGDConfig& cfg) {
  return std::ldexp(cfg.initial_lr, -static_cast<int>(iter / cfg.halve_period));
}

TrainState init_train_state(const ModelParams& params) { return {0, params.zeros_like()}; }

void sgd_step(ModelParams& params, const ModelParams& grads, TrainState& state,
              const SGDConfig& cfg) {
  auto theta = params.blocks();
  const auto g = grads.blocks();
  auto v = state.velocity.blocks();
  if (g.size() != theta.size() || v.size() != theta.size())
    throw DimensionError("sgd_step: parameter, gradient and velocity layouts differ");
  const double lr = lr_schedule(state.iteration, cfg);
  for (std::size_t b = 0; b < theta.size(); ++b) {
    if (g[b].values.size() != theta[b].values.size() ||
        v[b].values.size() != theta[b].values.size())
      throw DimensionError("sgd_step: block " + theta[b].name + " shape mismatch");
    for (std::size_t i = 0; i < theta[b].values.size(); ++i) {
      double& w = theta[b].values[i];
      double& vel = v[b].values[i];
      vel = cfg.momentum * vel - lr * (g[b].values[i] + cfg.weight_decay * w);
      w += vel;
    }
  }
  ++state.iteration;
  ++params.version;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels,
                                                   const SGDConfig& cfg, Rng& epoch_rng) {
  validate_sgd_config(cfg);
  const std::size_t p = identities_per_batch(cfg);
  const std::size_t k = cfg.images_per_identity;

  std::map<int, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < labels.size(); ++i) by_id[labels[i]].push_back(i);
  std::vector<std::vector<std::size_t>> pools;
  for (auto& [id, idx] : by_id) {
    std::shuffle(idx.begin(), idx.end(), epoch_rng);
    pools.push_back(std::move(idx));
  }
  std::vector<std::size_t> cursor(pools.size(), 0);

  std::vector<std::vector<std::size_t>> batches;
  for (;;) {
    std::vector<std::size_t> eligible;
    for (std::size_t id = 0; id < pools.size(); ++id)
      if (pools[id].size() - cursor[id] >= k) eligible.push_back(id);
    if (eligible.size() < p) break;
    std::shuffle(eligible.begin(), eligible.end(), epoch_rng);
    std::vector<std::size_t> batch;
    batch.reserve(p * k);
    for (std::size_t t = 0; t < p; ++t) {
      const std::size_t id = eligible[t];
      for (std::size_t j = 0; j < k; ++j) batch.push_back(pools[id][cursor[id]++]);
    }
    batches.push_back(std::move(batch));
  }
  if (batches.empty())
    throw ConfigError("make_batches: dataset cannot fill one batch of " + std::to_string(p) +
                      " identities x " + std::to_string(k) + " images (" +
                      std::to_string(pools.size()) + " identities available)");
  return batches;
}

TrainResult train(const std::vector<Sample>& dataset, const ModelConfig& model_cfg,
                  const SGDConfig& sgd_cfg, const LossConfig& loss_cfg) {
  return train_from(dataset, init_model(model_cfg), sgd_cfg, loss_cfg);
}

TrainResult train_from(const std::vector<Sample>& dataset, ModelParams params,
                       const SGDConfig& sgd_cfg, const LossConfig& loss_cfg) {
  validate_sgd_config(sgd_cfg);
  TrainResult result{std::move(params), {}};
  if (sgd_cfg.max_iters == 0) return result;

  std::vector<int> labels;
  labels.reserve(dataset.size());
  for (const Sample& s : dataset) labels.push_back(s.label);

  ModelParams& theta = result.params;
  TrainState state = init_train_state(theta);
  Rng epoch_rng = derive_rng(sgd_cfg.seed, 200);
  std::vector<std::vector<std::size_t>> epoch;
  std::size_t next = 0;

  for (std::size_t it = 0; it < sgd_cfg.max_iters; ++it) {
    if (next == epoch.size()) {
      epoch = make_batches(labels, sgd_cfg, epoch_rng);
      next = 0;
    }
    const std::vector<std::size_t>& batch = epoch[next++];

    std::vector<ForwardCache> caches(batch.size());
    parallel_for(batch.size(), sgd_cfg.threads,
                 [&](std::size_t i) { caches[i] = forward(dataset[batch[i]].image, theta); });
    std::vector<Vector> feats;
    std::vector<int> batch_labels;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      feats.push_back(caches[i].feature.values);
      batch_labels.push_back(labels[batch[i]]);
    }
    const BatchLoss bl = batch_loss(feats, batch_labels, loss_cfg);
    if (!std::isfinite(bl.loss)) {
      std::string name;
      const char* where = first_non_finite_block(theta, name);
      throw NonFiniteError("non-finite loss at iteration " + std::to_string(it) +
                           (where ? std::string("; parameter block ") + where + " is non-finite"
                                  : std::string("; all parameter blocks finite")));
    }

    std::vector<ModelParams> per_sample(batch.size());
    parallel_for(batch.size(), sgd_cfg.threads, [&](std::size_t i) {
      per_sample[i] = backward(theta, caches[i], bl.d_features[i]);
    });
    ModelParams grads = theta.zeros_like();
    for (const ModelParams& g : per_sample) accumulate(grads, g);
    std::string name;
    if (const char* where = first_non_finite_block(grads, name))
      throw NonFiniteError("non-finite gradient in parameter block " + std::string(where) +
                           " at iteration " + std::to_string(it));

    result.log.push_back({it, lr_schedule(state.iteration, sgd_cfg), bl.loss, bl.active_fraction()});
    sgd_step(theta, grads, state, sgd_cfg);
  }
  return result;
}

void write_log_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "iter,lr,loss,active_frac\n";
  char buf[128];
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.iter, r.lr, r.loss,
                  r.active_frac);
    os << buf;
  }
}

}  // namespace wbc
