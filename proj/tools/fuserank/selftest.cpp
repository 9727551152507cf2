#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fuserank/fusion.hpp"
#include "fuserank/metrics.hpp"
#include "fuserank/random.hpp"

namespace fuserank::cli {

namespace {

constexpr double kStep = 1e-6;
constexpr double kTolerance = 1e-5;
// Components smaller than this are compared absolutely.
constexpr double kScaleFloor = 1e-3;

Vector random_unit(Rng& rng, std::size_t dim) {
  Vector v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.gaussian();
  return v / v.norm();
}

ModalityVectors random_item(Rng& rng, std::size_t dim) {
  ModalityVectors out;
  for (Modality m : kAllModalities) out[m] = random_unit(rng, dim);
  return out;
}

// Worst relative error over every parameter of one random instance.
double check_instance(Rng& rng) {
  const std::size_t dim = 2 + rng.index(15);
  const std::size_t rank = 1 + rng.index(4);
  const double tau = rng.uniform() < 0.5 ? 0.05 : 1.0;

  AdapterSet set;
  for (Modality m : kAllModalities) {
    Adapter a = identity_adapter(m, dim, rank, 0.5 + rng.uniform());
    for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = rng.gaussian(0.0, 0.5);
    for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = rng.gaussian(0.0, 0.5);
    set.adapters.emplace(m, std::move(a));
  }
  ModalityMask mask = ModalityMask::from_bits(static_cast<std::uint8_t>(1 + rng.index(7)));

  InstanceVectors inst;
  inst.query = random_item(rng, dim);
  inst.positive = random_item(rng, dim);
  const std::size_t negs = 1 + rng.index(3);
  for (std::size_t j = 0; j < negs; ++j) inst.negatives.push_back(random_item(rng, dim));

  const Vector analytic = info_nce_grad(inst, mask, set, tau).gradient.flatten();
  const Vector base = set.flatten();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p[i] = base[i] + kStep;
    set.assign(p);
    const double plus = instance_loss(inst, mask, set, tau);
    p[i] = base[i] - kStep;
    set.assign(p);
    const double minus = instance_loss(inst, mask, set, tau);
    const double numeric = (plus - minus) / (2.0 * kStep);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), kScaleFloor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  set.assign(base);
  return worst;
}

bool fixture(std::ostream& out, const char* name, double got, double want) {
  char buf[128];
  const bool ok = std::abs(got - want) < 1e-6;
  std::snprintf(buf, sizeof buf, "%s %-22s %.6f (expected %.6f)\n", ok ? "ok  " : "FAIL", name,
                got, want);
  out << buf;
  return ok;
}

}  // namespace

bool run_selftest(std::size_t instances, std::uint64_t seed, std::ostream& out) {
  bool ok = true;

  Rng rng(derive_seed(seed, "selftest"));
  double worst = 0.0;
  for (std::size_t i = 0; i < instances; ++i) worst = std::max(worst, check_instance(rng));
  char buf[128];
  const bool grad_ok = worst < kTolerance;
  std::snprintf(buf, sizeof buf, "%s gradient check: %zu instances, max relative error %.3g\n",
                grad_ok ? "ok  " : "FAIL", instances, worst);
  out << buf;
  ok = ok && grad_ok;

  const MetricConfig cfg;
  {
    const std::vector<std::string> ranking{"x", "d1", "d2"};
    const Qrels::Judgments j{{"d1", 1}, {"d2", 1}};
    ok = fixture(out, "nDCG", ndcg_at_k(ranking, j, 10, cfg), 0.693427) && ok;
  }
  {
    const std::vector<std::string> ranking{"a", "b", "c"};
    const Qrels::Judgments j{{"a", 1}, {"c", 1}};
    ok = fixture(out, "AP", average_precision(ranking, j), 0.833333) && ok;
  }
  {
    const std::vector<std::string> ranking{"a", "b", "c"};
    const Qrels::Judgments j{{"c", 2}};
    ok = fixture(out, "RR", reciprocal_rank(ranking, j), 0.333333) && ok;
  }
  {
    std::vector<std::string> ranking;
    for (int i = 0; i < 10; ++i) ranking.push_back("d" + std::to_string(i));
    const Qrels::Judgments j{{"d0", 1}, {"d4", 1}, {"d9", 1}, {"e1", 1}, {"e2", 1}};
    ok = fixture(out, "R@10", recall_at_k(ranking, j, 10), 0.6) && ok;
  }
  {
    const std::vector<double> negs{0.0, 0.0, 0.0};
    ok = fixture(out, "InfoNCE symmetric", info_nce_from_scores(0.0, negs, 0.3), std::log(4.0)) &&
         ok;
    const std::vector<double> one{1.0};
    ok = fixture(out, "InfoNCE one negative", info_nce_from_scores(0.0, one, 1.0), 1.313262) && ok;
  }
  return ok;
}

}  // namespace fuserank::cli
