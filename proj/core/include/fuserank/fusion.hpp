#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fuserank/core_model.hpp"

namespace fuserank {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Low-rank residual adapter for one modality:
//   adapted(v) = normalize(v + alpha * up * (down * v))
// where down is [rank x dim] and up is [dim x rank]. With up == 0 the adapter
// returns its input unchanged.
struct Adapter {
  Modality modality = Modality::Text;
  double alpha = 1.0;
  Matrix down;  // A
  Matrix up;    // B

  std::size_t dim() const { return static_cast<std::size_t>(down.cols()); }
  std::size_t rank() const { return static_cast<std::size_t>(down.rows()); }

  // Exact (bitwise value) equality of shapes and parameters.
  friend bool operator==(const Adapter& a, const Adapter& b);
};

struct FusionConfig {
  ModalityMask train_mask = ModalityMask::all();
  ModalityMask infer_mask = ModalityMask::all();
  double temperature = 0.05;
  std::size_t rank = 8;
  double alpha = 1.0;
  double learning_rate = 1e-2;
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency

  // Throws DataError on empty masks, temperature <= 0, negative learning
  // rate, or zero rank/batch size.
  void validate() const;
};

// Adapters for each modality plus the masks and temperature they were
// trained with. A modality without an adapter passes through unchanged.
struct AdapterSet {
  std::map<Modality, Adapter> adapters;
  ModalityMask train_mask = ModalityMask::all();
  ModalityMask infer_mask = ModalityMask::all();
  double temperature = 0.05;

  const Adapter* find(Modality m) const;

  // All parameters in a fixed order: modalities ascending, then down and up,
  // each column-major.
  std::size_t parameter_count() const;
  Vector flatten() const;
  void assign(const Vector& params);

  friend bool operator==(const AdapterSet&, const AdapterSet&) = default;
};

// down ~ N(0, 1/rank) from a per-modality stream of cfg.seed, up = 0.
AdapterSet init_adapters(const std::map<Modality, std::size_t>& dims, const FusionConfig& cfg);

// Adapter with up == 0 and down == 0.
Adapter identity_adapter(Modality m, std::size_t dim, std::size_t rank, double alpha = 1.0);

// Throws DimMismatch, ZeroVector when the adapted vector vanishes.
Vector adapter_forward(const Vector& v, const Adapter& a);

using ModalityVectors = std::map<Modality, Vector>;

// Mean of the adapted vectors of every enabled modality, renormalised. With a
// single enabled modality the adapted vector is returned as-is.
// Throws MissingModality, ZeroVector on cancellation.
Vector fuse(const ModalityVectors& vecs, const ModalityMask& mask, const AdapterSet& adapters);

// -log softmax of the positive among {positive} + negatives, at temperature
// tau, computed from the similarities q.pos and q.neg_j.
double info_nce_loss(const Vector& q, const Vector& pos, std::span<const Vector> negs, double tau);
// Same, from precomputed similarities.
double info_nce_from_scores(double positive_score, std::span<const double> negative_scores,
                            double tau);

// Raw (pre-fusion) vectors of one training example.
struct InstanceVectors {
  ModalityVectors query;
  ModalityVectors positive;
  std::vector<ModalityVectors> negatives;
};

struct AdapterGradient {
  Matrix down;
  Matrix up;
};

struct AdapterGradients {
  std::map<Modality, AdapterGradient> per_modality;

  // Zero gradients shaped like the adapters.
  static AdapterGradients zeros_like(const AdapterSet& adapters);
  void add(const AdapterGradients& other);
  void scale(double s);
  double norm() const;
  // Same ordering as AdapterSet::flatten.
  Vector flatten() const;
};

struct LossAndGradient {
  double loss = 0.0;
  AdapterGradients gradient;
};

// Loss of the fused instance under `mask` and its exact gradient with respect
// to every adapter's down and up matrices. Query and documents share the
// adapters, so each adapter collects contributions from both sides.
LossAndGradient info_nce_grad(const InstanceVectors& instance, const ModalityMask& mask,
                              const AdapterSet& adapters, double tau);

// Loss only; the forward half of info_nce_grad.
double instance_loss(const InstanceVectors& instance, const ModalityMask& mask,
                     const AdapterSet& adapters, double tau);

// Fuses every row of one side (docs or queries). Ids and row order follow the
// first enabled modality; the others must hold every id. With adapters ==
// nullptr the raw vectors are fused. The result is tagged with a modality only
// when the mask enables exactly one.
EmbeddingMatrix fuse_matrix(const std::map<Modality, EmbeddingMatrix>& side,
                            const ModalityMask& mask, const AdapterSet* adapters,
                            std::size_t threads = 0);

// "ADPT1" | u8 train mask | u8 infer mask | u8 count |
//   count x (u8 modality | u32 dim | u32 rank)
// followed by little-endian f64: temperature, then per adapter alpha, down
// and up (row-major).
inline constexpr std::string_view kAdapterMagic = "ADPT1";
std::string serialize_adapters(const AdapterSet& set);
AdapterSet parse_adapters(std::string_view bytes, const std::string& source = "<adapters>");

}  // namespace fuserank
