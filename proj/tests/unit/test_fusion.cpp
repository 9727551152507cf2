#include <doctest.h>

#include <algorithm>

#include <cmath>

#include "fixtures.hpp"
#include "fuserank/error.hpp"
#include "fuserank/fusion.hpp"
#include "oracles.hpp"

using namespace fuserank;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Vector random_unit_vector(Rng& rng, Eigen::Index dim) {
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v[i] = rng.gaussian();
  return v / v.norm();
}

AdapterSet random_adapters(Rng& rng, std::size_t dim, std::size_t rank, double scale) {
  AdapterSet set;
  for (Modality m : kAllModalities) {
    Adapter a = identity_adapter(m, dim, rank);
    for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = rng.gaussian(0.0, scale);
    for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = rng.gaussian(0.0, scale);
    set.adapters.emplace(m, a);
  }
  return set;
}

InstanceVectors random_instance(Rng& rng, Eigen::Index dim, std::size_t negs) {
  auto item = [&] {
    ModalityVectors v;
    for (Modality m : kAllModalities) v[m] = random_unit_vector(rng, dim);
    return v;
  };
  InstanceVectors inst{item(), item(), {}};
  for (std::size_t j = 0; j < negs; ++j) inst.negatives.push_back(item());
  return inst;
}

}  // namespace

TEST_CASE("adapter_forward") {
  Adapter a = identity_adapter(Modality::Text, 2, 1);
  a.down(0, 0) = 1.0;
  const Vector v = vec({1.0, 0.0});
  CHECK(adapter_forward(v, a) == v);

  a.up(1, 0) = 1.0;
  const Vector out = adapter_forward(v, a);
  CHECK(out[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  a.alpha = 0.0;
  CHECK(adapter_forward(v, a) == v);

  Adapter cancel = identity_adapter(Modality::Text, 2, 1);
  cancel.down(0, 0) = 1.0;
  cancel.up(0, 0) = -1.0;
  CHECK_THROWS_AS(adapter_forward(v, cancel), ZeroVector);
  CHECK_THROWS_AS(adapter_forward(vec({1.0, 0.0, 0.0}), a), DimMismatch);
}

TEST_CASE("fuse") {
  AdapterSet none;
  const ModalityVectors v{{Modality::Text, vec({1.0, 0.0, 0.0})},
                          {Modality::Video, vec({0.0, 1.0, 0.0})}};
  const Vector f = fuse(v, parse_mask("text,video"), none);
  CHECK(f[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(f[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(f[2] == 0.0);

  CHECK(fuse(v, ModalityMask::only(Modality::Video), none) == v.at(Modality::Video));
  CHECK_THROWS_AS(fuse(v, ModalityMask::all(), none), MissingModality);

  const ModalityVectors opposite{{Modality::Text, vec({1.0, 0.0})},
                                 {Modality::Audio, vec({-1.0, 0.0})}};
  CHECK_THROWS_AS(fuse(opposite, parse_mask("text,audio"), none), ZeroVector);
}

TEST_CASE("info_nce_loss closed forms") {
  const std::vector<double> equal{0.3, 0.3, 0.3};
  CHECK(info_nce_from_scores(0.3, equal, 0.7) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  const std::vector<double> zeros{0.0, 0.0, 0.0};
  const double tiny = info_nce_from_scores(1.0, zeros, 0.05);
  CHECK(tiny == doctest::Approx(std::log1p(3.0 * std::exp(-20.0))).epsilon(1e-9));
  CHECK(tiny == doctest::Approx(6.18e-9).epsilon(1e-3));
  CHECK(tiny > 0.0);

  const std::vector<double> one{1.0};
  CHECK(info_nce_from_scores(0.0, one, 1.0) == doctest::Approx(1.313262).epsilon(1e-6));

  const std::vector<double> huge{-1.0};
  CHECK(std::isfinite(info_nce_from_scores(1.0, huge, 1e-4)));

  const Vector q = vec({1.0, 0.0}), pos = vec({0.0, 1.0});
  const std::vector<Vector> negs{vec({1.0, 0.0})};
  CHECK(info_nce_loss(q, pos, negs, 1.0) == doctest::Approx(1.313262).epsilon(1e-6));
}

TEST_CASE("analytic gradient matches finite differences") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dim = 3 + rng.index(8);
    const std::size_t rank = 1 + rng.index(3);
    const double tau = trial % 2 ? 1.0 : 0.05;
    const AdapterSet set = random_adapters(rng, dim, rank, 0.5);
    const InstanceVectors inst = random_instance(rng, static_cast<Eigen::Index>(dim), 3);
    const ModalityMask mask = ModalityMask::from_bits(static_cast<std::uint8_t>(1 + trial % 7));
    const LossAndGradient lg = info_nce_grad(inst, mask, set, tau);
    CHECK(lg.loss == doctest::Approx(instance_loss(inst, mask, set, tau)).epsilon(1e-12));
    const Vector fd = testing::finite_difference_gradient(inst, mask, set, tau, 1e-6);
    CHECK(testing::max_relative_error(lg.gradient.flatten(), fd, 1e-3) < 1e-5);
  }
}

TEST_CASE("gradient vanishes at a separated instance") {
  AdapterSet set;
  set.adapters.emplace(Modality::Text, identity_adapter(Modality::Text, 4, 2));
  set.adapters.at(Modality::Text).down.setConstant(0.3);
  const Vector q = vec({1.0, 0.0, 0.0, 0.0});
  InstanceVectors inst{{{Modality::Text, q}}, {{Modality::Text, q}}, {}};
  for (int j = 1; j < 4; ++j) {
    Vector n = Vector::Zero(4);
    n[j] = 1.0;
    inst.negatives.push_back({{Modality::Text, n}});
  }
  const LossAndGradient lg =
      info_nce_grad(inst, ModalityMask::only(Modality::Text), set, 0.01);
  CHECK(lg.gradient.norm() < 1e-6);
}

TEST_CASE("gradients touch only enabled modalities") {
  Rng rng(4);
  const AdapterSet set = random_adapters(rng, 5, 2, 0.3);
  const InstanceVectors inst = random_instance(rng, 5, 2);
  const auto g = info_nce_grad(inst, ModalityMask::only(Modality::Video), set, 0.1).gradient;
  CHECK(g.per_modality.at(Modality::Video).up.norm() > 0.0);
  for (Modality m : {Modality::Text, Modality::Audio}) {
    const auto it = g.per_modality.find(m);
    if (it != g.per_modality.end()) {
      CHECK(it->second.down.norm() == 0.0);
      CHECK(it->second.up.norm() == 0.0);
    }
  }
}

TEST_CASE("init_adapters starts at the identity and is seeded") {
  FusionConfig cfg;
  cfg.rank = 3;
  cfg.seed = 9;
  const std::map<Modality, std::size_t> dims{{Modality::Text, 6}, {Modality::Audio, 6}};
  const AdapterSet a = init_adapters(dims, cfg);
  CHECK(a.adapters.size() == 2);
  CHECK(a.find(Modality::Text)->up.norm() == 0.0);
  CHECK(a.find(Modality::Text)->down.norm() > 0.0);
  CHECK(init_adapters(dims, cfg) == a);
  cfg.seed = 10;
  CHECK_FALSE(init_adapters(dims, cfg) == a);

  Rng rng(1);
  const Vector v = random_unit_vector(rng, 6);
  CHECK(adapter_forward(v, *a.find(Modality::Text)) == v);
}

TEST_CASE("flatten and assign are inverse") {
  Rng rng(2);
  AdapterSet set = random_adapters(rng, 4, 2, 1.0);
  const Vector p = set.flatten();
  CHECK(static_cast<std::size_t>(p.size()) == set.parameter_count());
  AdapterSet copy = random_adapters(rng, 4, 2, 1.0);
  copy.assign(p);
  CHECK(copy == set);
}

TEST_CASE("adapter serialisation") {
  Rng rng(8);
  AdapterSet set = random_adapters(rng, 5, 2, 1.0);
  set.train_mask = parse_mask("text,audio");
  set.infer_mask = ModalityMask::only(Modality::Text);
  set.temperature = 0.07;
  const std::string bytes = serialize_adapters(set);
  CHECK(bytes.substr(0, 5) == "ADPT1");
  CHECK(parse_adapters(bytes) == set);
  CHECK(serialize_adapters(parse_adapters(bytes)) == bytes);
  CHECK_THROWS_AS(parse_adapters(bytes.substr(0, bytes.size() - 3)), ParseError);
}

TEST_CASE("fuse_matrix") {
  Rng rng(12);
  std::map<Modality, EmbeddingMatrix> side;
  for (Modality m : kAllModalities) side.emplace(m, testing::random_unit(rng, m, 6, 4, "d"));
  const EmbeddingMatrix text = fuse_matrix(side, ModalityMask::only(Modality::Text), nullptr, 1);
  CHECK(std::ranges::equal(text.values(), side.at(Modality::Text).values()));
  CHECK(text.modality() == Modality::Text);

  const EmbeddingMatrix all = fuse_matrix(side, ModalityMask::all(), nullptr, 2);
  CHECK(all.ids() == side.at(Modality::Text).ids());
  CHECK_FALSE(all.modality().has_value());
  const EmbeddingMatrix serial = fuse_matrix(side, ModalityMask::all(), nullptr, 1);
  CHECK(std::ranges::equal(all.values(), serial.values()));

  side.erase(Modality::Audio);
  CHECK_THROWS_AS(fuse_matrix(side, ModalityMask::all(), nullptr, 1), DataError);
}
