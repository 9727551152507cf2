#pragma once

#include <cstddef>
#include <vector>

#include "fuserank/fusion.hpp"
#include "fuserank/ingest.hpp"
#include "fuserank/mining.hpp"

namespace fuserank {

struct EpochStats {
  std::size_t epoch = 0;   // 1-based
  double mean_loss = 0.0;  // over instances, losses taken before each step
  double mean_grad_norm = 0.0;  // mean per-instance gradient norm
  double seconds = 0.0;
};

struct TrainStats {
  double initial_loss = 0.0;  // mean loss of the initial adapters
  double final_loss = 0.0;    // mean loss of the returned adapters
  std::size_t instances = 0;
  std::vector<EpochStats> epochs;
};

struct TrainResult {
  AdapterSet adapters;
  TrainStats stats;
};

// Gathers the raw vectors of a triplet for the modalities in `mask`.
// Throws NoEmbedding.
InstanceVectors gather_instance(const Collection& c, const TrainingInstance& t,
                                const ModalityMask& mask);

// Plain mini-batch gradient descent on the mean InfoNCE loss of the fused
// triplets. Adapters start with up == 0 (the identity); triplets are
// reshuffled every epoch from a seeded stream. Results do not depend on
// cfg.threads. Throws NonFiniteLoss with the failing epoch and batch.
TrainResult train(const Collection& c, const std::vector<TrainingInstance>& triplets,
                  const FusionConfig& cfg);

// Same, continuing from given adapters.
TrainResult train_from(const Collection& c, const std::vector<TrainingInstance>& triplets,
                       const FusionConfig& cfg, AdapterSet initial);

// Mean loss over the triplets, summed in triplet order.
double mean_loss(const std::vector<InstanceVectors>& instances, const ModalityMask& mask,
                 const AdapterSet& adapters, double tau, std::size_t threads = 0);

}  // namespace fuserank
