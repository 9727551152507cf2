#include "fuserank/fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "fuserank/error.hpp"
#include "fuserank/parallel.hpp"
#include "fuserank/random.hpp"

namespace fuserank {

namespace {

constexpr double kVanishingNorm = 1e-12;

// Forward state of one adapter application, kept for backpropagation.
struct AdapterTrace {
  Modality modality;
  const Adapter* adapter = nullptr;  // nullptr: pass-through
  Vector input;
  Vector projected;  // down * input
  double norm = 1.0;  // |input + alpha * up * projected|
  Vector output;
};

struct FusedTrace {
  std::vector<AdapterTrace> parts;
  double mean_norm = 1.0;
  Vector output;
};

AdapterTrace trace_adapter(const Vector& v, Modality m, const Adapter* a) {
  AdapterTrace t{m, a, v, {}, 1.0, {}};
  if (a == nullptr) {
    t.output = v;
    t.norm = v.norm();
    return t;
  }
  if (static_cast<std::size_t>(v.size()) != a->dim())
    throw DimMismatch(a->dim(), static_cast<std::size_t>(v.size()));
  t.projected = a->down * v;
  const Vector residual = a->alpha * (a->up * t.projected);
  if ((residual.array() == 0.0).all()) {
    // Identity: keep the input bit-for-bit.
    t.output = v;
    t.norm = v.norm();
    return t;
  }
  const Vector u = v + residual;
  t.norm = u.norm();
  if (!(t.norm > kVanishingNorm) || !std::isfinite(t.norm))
    throw ZeroVector("adapted " + std::string(to_string(m)) + " vector vanished");
  t.output = u / t.norm;
  return t;
}

FusedTrace trace_fuse(const ModalityVectors& vecs, const ModalityMask& mask,
                      const AdapterSet* adapters) {
  if (mask.empty()) throw DataError("fusion mask enables no modality");
  FusedTrace f;
  for (Modality m : mask.modalities()) {
    auto it = vecs.find(m);
    if (it == vecs.end() || it->second.size() == 0)
      throw MissingModality(std::string(to_string(m)));
    f.parts.push_back(trace_adapter(it->second, m, adapters ? adapters->find(m) : nullptr));
  }
  if (f.parts.size() == 1) {
    f.output = f.parts.front().output;
    return f;
  }
  const auto dim = f.parts.front().output.size();
  Vector mean = Vector::Zero(dim);
  for (const AdapterTrace& t : f.parts) {
    if (t.output.size() != dim)
      throw DimMismatch(static_cast<std::size_t>(dim), static_cast<std::size_t>(t.output.size()));
    mean += t.output;
  }
  mean /= static_cast<double>(f.parts.size());
  f.mean_norm = mean.norm();
  if (!(f.mean_norm > kVanishingNorm)) throw ZeroVector("fused vector cancelled to zero");
  f.output = mean / f.mean_norm;
  return f;
}

void backprop_adapter(const AdapterTrace& t, const Vector& grad_output, AdapterGradients& out) {
  if (t.adapter == nullptr) return;
  auto it = out.per_modality.find(t.modality);
  if (it == out.per_modality.end()) return;
  // d normalize(u) / du = (I - y y^T) / |u|
  const Vector grad_u = (grad_output - t.output * t.output.dot(grad_output)) / t.norm;
  const double alpha = t.adapter->alpha;
  it->second.up.noalias() += alpha * grad_u * t.projected.transpose();
  it->second.down.noalias() += alpha * (t.adapter->up.transpose() * grad_u) * t.input.transpose();
}

void backprop_fuse(const FusedTrace& f, const Vector& grad_output, AdapterGradients& out) {
  if (f.parts.size() == 1) {
    backprop_adapter(f.parts.front(), grad_output, out);
    return;
  }
  const Vector grad_mean =
      (grad_output - f.output * f.output.dot(grad_output)) / f.mean_norm;
  const Vector grad_part = grad_mean / static_cast<double>(f.parts.size());
  for (const AdapterTrace& t : f.parts) backprop_adapter(t, grad_part, out);
}

struct InstanceForward {
  FusedTrace query;
  std::vector<FusedTrace> docs;  // positive first
  std::vector<double> scores;
  double loss = 0.0;
};

InstanceForward forward_instance(const InstanceVectors& instance, const ModalityMask& mask,
                                 const AdapterSet& adapters, double tau) {
  if (instance.negatives.empty()) throw DataError("instance has no negatives");
  if (!(tau > 0.0)) throw DataError("temperature must be positive");
  InstanceForward fw;
  fw.query = trace_fuse(instance.query, mask, &adapters);
  fw.docs.reserve(instance.negatives.size() + 1);
  fw.docs.push_back(trace_fuse(instance.positive, mask, &adapters));
  for (const ModalityVectors& n : instance.negatives)
    fw.docs.push_back(trace_fuse(n, mask, &adapters));
  fw.scores.reserve(fw.docs.size());
  for (const FusedTrace& d : fw.docs) fw.scores.push_back(fw.query.output.dot(d.output));
  fw.loss = info_nce_from_scores(fw.scores.front(),
                                 std::span<const double>(fw.scores).subspan(1), tau);
  return fw;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f64(std::string& out, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError(source_ + ": truncated adapter file");
  }
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

bool operator==(const Adapter& a, const Adapter& b) {
  if (a.modality != b.modality || a.alpha != b.alpha) return false;
  if (a.down.rows() != b.down.rows() || a.down.cols() != b.down.cols()) return false;
  if (a.up.rows() != b.up.rows() || a.up.cols() != b.up.cols()) return false;
  return (a.down.array() == b.down.array()).all() && (a.up.array() == b.up.array()).all();
}

void FusionConfig::validate() const {
  if (train_mask.empty()) throw DataError("training mask enables no modality");
  if (infer_mask.empty()) throw DataError("inference mask enables no modality");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw DataError("temperature must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw DataError("learning rate must be non-negative");
  if (rank == 0) throw DataError("adapter rank must be positive");
  if (batch_size == 0) throw DataError("batch size must be positive");
  if (!std::isfinite(alpha)) throw DataError("adapter scale must be finite");
}

const Adapter* AdapterSet::find(Modality m) const {
  auto it = adapters.find(m);
  return it == adapters.end() ? nullptr : &it->second;
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [m, a] : adapters)
    n += static_cast<std::size_t>(a.down.size() + a.up.size());
  return n;
}

Vector AdapterSet::flatten() const {
  Vector out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  for (const auto& [m, a] : adapters) {
    out.segment(pos, a.down.size()) = a.down.reshaped();
    pos += a.down.size();
    out.segment(pos, a.up.size()) = a.up.reshaped();
    pos += a.up.size();
  }
  return out;
}

void AdapterSet::assign(const Vector& params) {
  if (static_cast<std::size_t>(params.size()) != parameter_count())
    throw DimMismatch(parameter_count(), static_cast<std::size_t>(params.size()));
  Eigen::Index pos = 0;
  for (auto& [m, a] : adapters) {
    a.down.reshaped() = params.segment(pos, a.down.size());
    pos += a.down.size();
    a.up.reshaped() = params.segment(pos, a.up.size());
    pos += a.up.size();
  }
}

Adapter identity_adapter(Modality m, std::size_t dim, std::size_t rank, double alpha) {
  Adapter a;
  a.modality = m;
  a.alpha = alpha;
  a.down = Matrix::Zero(static_cast<Eigen::Index>(rank), static_cast<Eigen::Index>(dim));
  a.up = Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rank));
  return a;
}

AdapterSet init_adapters(const std::map<Modality, std::size_t>& dims, const FusionConfig& cfg) {
  cfg.validate();
  AdapterSet set;
  set.train_mask = cfg.train_mask;
  set.infer_mask = cfg.infer_mask;
  set.temperature = cfg.temperature;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.rank));
  for (const auto& [m, dim] : dims) {
    Adapter a = identity_adapter(m, dim, cfg.rank, cfg.alpha);
    Rng rng(derive_seed(cfg.seed, "adapter." + std::string(to_string(m))));
    for (Eigen::Index r = 0; r < a.down.rows(); ++r)
      for (Eigen::Index c = 0; c < a.down.cols(); ++c) a.down(r, c) = rng.gaussian(0.0, stddev);
    set.adapters.emplace(m, std::move(a));
  }
  return set;
}

Vector adapter_forward(const Vector& v, const Adapter& a) {
  return trace_adapter(v, a.modality, &a).output;
}

Vector fuse(const ModalityVectors& vecs, const ModalityMask& mask, const AdapterSet& adapters) {
  return trace_fuse(vecs, mask, &adapters).output;
}

double info_nce_from_scores(double positive_score, std::span<const double> negative_scores,
                            double tau) {
  if (negative_scores.empty()) throw DataError("InfoNCE needs at least one negative");
  if (!(tau > 0.0)) throw DataError("temperature must be positive");
  // L = (z_max - z_pos) + log1p(sum_{j != argmax} exp(z_j - z_max))
  const double z_pos = positive_score / tau;
  double z_max = z_pos;
  std::size_t arg_max = 0;  // 0 = positive, j + 1 = negative j
  for (std::size_t j = 0; j < negative_scores.size(); ++j) {
    const double z = negative_scores[j] / tau;
    if (z > z_max) {
      z_max = z;
      arg_max = j + 1;
    }
  }
  double tail = arg_max == 0 ? 0.0 : std::exp(z_pos - z_max);
  for (std::size_t j = 0; j < negative_scores.size(); ++j)
    if (j + 1 != arg_max) tail += std::exp(negative_scores[j] / tau - z_max);
  return (z_max - z_pos) + std::log1p(tail);
}

double info_nce_loss(const Vector& q, const Vector& pos, std::span<const Vector> negs, double tau) {
  std::vector<double> scores;
  scores.reserve(negs.size());
  for (const Vector& n : negs) {
    if (n.size() != q.size())
      throw DimMismatch(static_cast<std::size_t>(q.size()), static_cast<std::size_t>(n.size()));
    scores.push_back(q.dot(n));
  }
  if (pos.size() != q.size())
    throw DimMismatch(static_cast<std::size_t>(q.size()), static_cast<std::size_t>(pos.size()));
  return info_nce_from_scores(q.dot(pos), scores, tau);
}

AdapterGradients AdapterGradients::zeros_like(const AdapterSet& adapters) {
  AdapterGradients g;
  for (const auto& [m, a] : adapters.adapters)
    g.per_modality.emplace(m, AdapterGradient{Matrix::Zero(a.down.rows(), a.down.cols()),
                                              Matrix::Zero(a.up.rows(), a.up.cols())});
  return g;
}

void AdapterGradients::add(const AdapterGradients& other) {
  for (const auto& [m, g] : other.per_modality) {
    auto it = per_modality.find(m);
    if (it == per_modality.end()) {
      per_modality.emplace(m, g);
    } else {
      it->second.down += g.down;
      it->second.up += g.up;
    }
  }
}

void AdapterGradients::scale(double s) {
  for (auto& [m, g] : per_modality) {
    g.down *= s;
    g.up *= s;
  }
}

double AdapterGradients::norm() const {
  double sq = 0.0;
  for (const auto& [m, g] : per_modality) sq += g.down.squaredNorm() + g.up.squaredNorm();
  return std::sqrt(sq);
}

Vector AdapterGradients::flatten() const {
  Eigen::Index n = 0;
  for (const auto& [m, g] : per_modality) n += g.down.size() + g.up.size();
  Vector out(n);
  Eigen::Index pos = 0;
  for (const auto& [m, g] : per_modality) {
    out.segment(pos, g.down.size()) = g.down.reshaped();
    pos += g.down.size();
    out.segment(pos, g.up.size()) = g.up.reshaped();
    pos += g.up.size();
  }
  return out;
}

LossAndGradient info_nce_grad(const InstanceVectors& instance, const ModalityMask& mask,
                              const AdapterSet& adapters, double tau) {
  const InstanceForward fw = forward_instance(instance, mask, adapters, tau);

  // dL/ds_j = (softmax(s / tau)_j - [j == positive]) / tau
  const double z_max = *std::max_element(fw.scores.begin(), fw.scores.end()) / tau;
  std::vector<double> weights(fw.scores.size());
  double total = 0.0;
  for (std::size_t j = 0; j < fw.scores.size(); ++j) {
    weights[j] = std::exp(fw.scores[j] / tau - z_max);
    total += weights[j];
  }
  for (std::size_t j = 0; j < weights.size(); ++j)
    weights[j] = (weights[j] / total - (j == 0 ? 1.0 : 0.0)) / tau;

  LossAndGradient out{fw.loss, AdapterGradients::zeros_like(adapters)};
  Vector grad_query = Vector::Zero(fw.query.output.size());
  for (std::size_t j = 0; j < fw.docs.size(); ++j) {
    grad_query += weights[j] * fw.docs[j].output;
    backprop_fuse(fw.docs[j], weights[j] * fw.query.output, out.gradient);
  }
  backprop_fuse(fw.query, grad_query, out.gradient);
  return out;
}

double instance_loss(const InstanceVectors& instance, const ModalityMask& mask,
                     const AdapterSet& adapters, double tau) {
  return forward_instance(instance, mask, adapters, tau).loss;
}

EmbeddingMatrix fuse_matrix(const std::map<Modality, EmbeddingMatrix>& side,
                            const ModalityMask& mask, const AdapterSet* adapters,
                            std::size_t threads) {
  const std::vector<Modality> enabled = mask.modalities();
  if (enabled.empty()) throw DataError("fusion mask enables no modality");
  std::vector<const EmbeddingMatrix*> sources;
  for (Modality m : enabled) {
    auto it = side.find(m);
    if (it == side.end()) throw MissingModality(std::string(to_string(m)));
    sources.push_back(&it->second);
  }
  const EmbeddingMatrix& lead = *sources.front();
  const std::size_t dim = lead.dim();
  for (const EmbeddingMatrix* s : sources)
    if (s->dim() != dim) throw DimMismatch(dim, s->dim());

  std::vector<double> values(lead.rows() * dim);
  parallel_for(lead.rows(), threads, [&](std::size_t r) {
    const std::string& id = lead.ids()[r];
    ModalityVectors vecs;
    for (std::size_t k = 0; k < enabled.size(); ++k) {
      const auto row = k == 0 ? lead.row(r) : sources[k]->at(id);
      vecs.emplace(enabled[k], Eigen::Map<const Vector>(row.data(), static_cast<Eigen::Index>(dim)));
    }
    const Vector fused = trace_fuse(vecs, mask, adapters).output;
    std::copy(fused.data(), fused.data() + dim, values.begin() + static_cast<std::ptrdiff_t>(r * dim));
  });
  std::optional<Modality> modality;
  if (enabled.size() == 1) modality = enabled.front();
  return EmbeddingMatrix::from_unit_rows(modality, dim, lead.ids(), std::move(values));
}

std::string serialize_adapters(const AdapterSet& set) {
  if (set.adapters.size() > 3) throw DataError("too many adapters");
  std::string out(kAdapterMagic);
  out.push_back(static_cast<char>(set.train_mask.bits()));
  out.push_back(static_cast<char>(set.infer_mask.bits()));
  out.push_back(static_cast<char>(set.adapters.size()));
  for (const auto& [m, a] : set.adapters) {
    out.push_back(static_cast<char>(m));
    put_u32(out, static_cast<std::uint32_t>(a.dim()));
    put_u32(out, static_cast<std::uint32_t>(a.rank()));
  }
  put_f64(out, set.temperature);
  for (const auto& [m, a] : set.adapters) {
    put_f64(out, a.alpha);
    for (Eigen::Index r = 0; r < a.down.rows(); ++r)
      for (Eigen::Index c = 0; c < a.down.cols(); ++c) put_f64(out, a.down(r, c));
    for (Eigen::Index r = 0; r < a.up.rows(); ++r)
      for (Eigen::Index c = 0; c < a.up.cols(); ++c) put_f64(out, a.up(r, c));
  }
  return out;
}

AdapterSet parse_adapters(std::string_view bytes, const std::string& source) {
  ByteReader in(bytes, source);
  if (in.take(kAdapterMagic.size()) != kAdapterMagic)
    throw ParseError(source + ": missing ADPT1 header");
  AdapterSet set;
  set.train_mask = ModalityMask::from_bits(static_cast<std::uint8_t>(in.uint(1)));
  set.infer_mask = ModalityMask::from_bits(static_cast<std::uint8_t>(in.uint(1)));
  const auto count = in.uint(1);
  if (count > 3) throw ParseError(source + ": adapter count out of range");
  std::vector<std::tuple<Modality, std::size_t, std::size_t>> shapes;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto m = in.uint(1);
    if (m > 2) throw ParseError(source + ": unknown modality byte");
    const auto dim = static_cast<std::size_t>(in.uint(4));
    const auto rank = static_cast<std::size_t>(in.uint(4));
    if (dim == 0 || rank == 0) throw ParseError(source + ": zero adapter shape");
    shapes.emplace_back(static_cast<Modality>(m), dim, rank);
  }
  set.temperature = in.f64();
  for (const auto& [m, dim, rank] : shapes) {
    Adapter a = identity_adapter(m, dim, rank);
    a.alpha = in.f64();
    for (Eigen::Index r = 0; r < a.down.rows(); ++r)
      for (Eigen::Index c = 0; c < a.down.cols(); ++c) a.down(r, c) = in.f64();
    for (Eigen::Index r = 0; r < a.up.rows(); ++r)
      for (Eigen::Index c = 0; c < a.up.cols(); ++c) a.up(r, c) = in.f64();
    if (!set.adapters.emplace(m, std::move(a)).second)
      throw ParseError(source + ": duplicate modality");
  }
  if (!in.done()) throw ParseError(source + ": trailing bytes after adapter payload");
  return set;
}

}  // namespace fuserank
