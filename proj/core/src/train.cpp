#include "fuserank/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "fuserank/error.hpp"
#include "fuserank/parallel.hpp"
#include "fuserank/random.hpp"

namespace fuserank {

namespace {

ModalityVectors lookup(const std::map<Modality, EmbeddingMatrix>& side, const std::string& id,
                       const ModalityMask& mask) {
  ModalityVectors out;
  for (Modality m : mask.modalities()) {
    auto it = side.find(m);
    if (it == side.end()) throw MissingModality(std::string(to_string(m)));
    const auto row = it->second.at(id);
    out.emplace(m, Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  return out;
}

void sgd_step(AdapterSet& adapters, const AdapterGradients& grad, const ModalityMask& trainable,
              double learning_rate) {
  for (auto& [m, a] : adapters.adapters) {
    if (!trainable.enabled(m)) continue;
    auto it = grad.per_modality.find(m);
    if (it == grad.per_modality.end()) continue;
    a.down -= learning_rate * it->second.down;
    a.up -= learning_rate * it->second.up;
  }
}

bool all_finite(const AdapterGradients& g) {
  for (const auto& [m, part] : g.per_modality)
    if (!part.down.allFinite() || !part.up.allFinite()) return false;
  return true;
}

}  // namespace

InstanceVectors gather_instance(const Collection& c, const TrainingInstance& t,
                                const ModalityMask& mask) {
  InstanceVectors v;
  v.query = lookup(c.query_embeddings, t.query_id, mask);
  v.positive = lookup(c.doc_embeddings, t.positive_id, mask);
  for (const std::string& n : t.negative_ids)
    v.negatives.push_back(lookup(c.doc_embeddings, n, mask));
  return v;
}

double mean_loss(const std::vector<InstanceVectors>& instances, const ModalityMask& mask,
                 const AdapterSet& adapters, double tau, std::size_t threads) {
  if (instances.empty()) return 0.0;
  std::vector<double> losses(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    losses[i] = instance_loss(instances[i], mask, adapters, tau);
  });
  return std::accumulate(losses.begin(), losses.end(), 0.0) /
         static_cast<double>(instances.size());
}

TrainResult train(const Collection& c, const std::vector<TrainingInstance>& triplets,
                  const FusionConfig& cfg) {
  cfg.validate();
  std::map<Modality, std::size_t> dims;
  for (Modality m : kAllModalities) {
    if (!cfg.train_mask.enabled(m) && !cfg.infer_mask.enabled(m)) continue;
    auto it = c.doc_embeddings.find(m);
    if (it != c.doc_embeddings.end()) dims.emplace(m, it->second.dim());
    else if (cfg.train_mask.enabled(m)) throw MissingModality(std::string(to_string(m)));
  }
  return train_from(c, triplets, cfg, init_adapters(dims, cfg));
}

TrainResult train_from(const Collection& c, const std::vector<TrainingInstance>& triplets,
                       const FusionConfig& cfg, AdapterSet initial) {
  cfg.validate();
  const ModalityMask& mask = cfg.train_mask;
  std::vector<InstanceVectors> instances;
  instances.reserve(triplets.size());
  for (const TrainingInstance& t : triplets) instances.push_back(gather_instance(c, t, mask));

  TrainResult result{std::move(initial), {}};
  AdapterSet& adapters = result.adapters;
  adapters.train_mask = cfg.train_mask;
  adapters.infer_mask = cfg.infer_mask;
  adapters.temperature = cfg.temperature;

  TrainStats& stats = result.stats;
  stats.instances = instances.size();
  stats.initial_loss = mean_loss(instances, mask, adapters, cfg.temperature, cfg.threads);
  if (!std::isfinite(stats.initial_loss)) throw NonFiniteLoss(0, 0);

  Rng rng(derive_seed(cfg.seed, "train.shuffle"));
  std::vector<std::size_t> order(instances.size());
  std::vector<double> losses(instances.size());
  std::vector<double> grad_norms(instances.size());
  std::vector<LossAndGradient> batch_results;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());

    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      batch_results.assign(end - begin, {});
      parallel_for(end - begin, cfg.threads, [&](std::size_t k) {
        batch_results[k] = info_nce_grad(instances[order[begin + k]], mask, adapters,
                                         cfg.temperature);
      });

      AdapterGradients batch_grad = AdapterGradients::zeros_like(adapters);
      for (std::size_t k = 0; k < batch_results.size(); ++k) {
        const LossAndGradient& r = batch_results[k];
        if (!std::isfinite(r.loss) || !all_finite(r.gradient))
          throw NonFiniteLoss(static_cast<int>(epoch), batch_index);
        losses[order[begin + k]] = r.loss;
        grad_norms[order[begin + k]] = r.gradient.norm();
        batch_grad.add(r.gradient);
      }
      batch_grad.scale(1.0 / static_cast<double>(batch_results.size()));
      sgd_step(adapters, batch_grad, mask, cfg.learning_rate);
    }

    EpochStats e;
    e.epoch = epoch;
    if (!instances.empty()) {
      const double n = static_cast<double>(instances.size());
      e.mean_loss = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
      e.mean_grad_norm = std::accumulate(grad_norms.begin(), grad_norms.end(), 0.0) / n;
    }
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    stats.epochs.push_back(e);
  }

  stats.final_loss = mean_loss(instances, mask, adapters, cfg.temperature, cfg.threads);
  if (!std::isfinite(stats.final_loss))
    throw NonFiniteLoss(static_cast<int>(cfg.epochs), 0);
  return result;
}

}  // namespace fuserank
