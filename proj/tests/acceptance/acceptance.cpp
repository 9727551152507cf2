// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "fuserank/formats.hpp"
#include "fuserank/fusion.hpp"
#include "fuserank/ingest.hpp"
#include "fuserank/metrics.hpp"
#include "fuserank/mining.hpp"
#include "fuserank/report.hpp"
#include "fuserank/search.hpp"
#include "fuserank/train.hpp"
#include "oracles.hpp"
#include "planted.hpp"

using namespace fuserank;
namespace t = fuserank::testing;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict metric_oracle() {
  const auto start = Clock::now();
  Rng rng(derive_seed(1, "acceptance.metrics"));
  double worst = 0.0;
  std::size_t queries_checked = 0;
  for (int instance = 0; instance < 200; ++instance) {
    const std::size_t n_queries = 1 + rng.index(50);
    const std::size_t n_docs = 1 + rng.index(500);
    Qrels qrels;
    RunFile run;
    for (std::size_t q = 0; q < n_queries; ++q) {
      const std::string qid = t::make_id("q", q);
      const double density = rng.uniform() * 0.1;
      for (std::size_t d = 0; d < n_docs; ++d)
        if (rng.uniform() < density)
          qrels.set(qid, t::make_id("d", d), static_cast<int>(rng.index(4)));
      if (rng.uniform() < 0.1) continue;  // missing from the run
      std::vector<std::size_t> order(n_docs);
      for (std::size_t d = 0; d < n_docs; ++d) order[d] = d;
      rng.shuffle(order.begin(), order.end());
      const std::size_t depth = 1 + rng.index(std::min<std::size_t>(n_docs, 100));
      for (std::size_t r = 0; r < depth; ++r)
        run.entries.push_back({qid, t::make_id("d", order[r]), static_cast<int>(r + 1),
                               -static_cast<double>(r), "acc"});
    }
    MetricConfig cfg;
    if (rng.uniform() < 0.5) cfg.gain = Gain::Linear;
    const Evaluation eval = evaluate_run(run, qrels, cfg);
    const auto grouped = group_run(run);
    for (const auto& [qid, judgments] : qrels.data()) {
      if (qrels.relevant_count(qid) == 0) continue;
      std::vector<std::string> ranking;
      if (auto it = grouped.find(qid); it != grouped.end())
        for (const RankedDoc& d : it->second) ranking.push_back(d.doc_id);
      const t::NaiveScores naive = t::naive_metrics(ranking, judgments, 10, 10,
                                                    cfg.gain == Gain::Exponential);
      const auto found = eval.per_query.find(qid);
      if (found == eval.per_query.end()) return {false, "query " + qid + " missing from evaluation"};
      const MetricScores& s = found->second;
      for (double diff : {s[Metric::NdcgCut] - naive.ndcg_cut, s[Metric::AP] - naive.ap,
                          s[Metric::Ndcg] - naive.ndcg, s[Metric::RR] - naive.rr,
                          s[Metric::RecallCut] - naive.recall_cut})
        worst = std::max(worst, std::abs(diff));
      ++queries_checked;
    }
  }
  const double secs = seconds_since(start);
  return {worst <= 1e-9 && secs < 10.0,
          fmt("%zu queries over 200 instances, max |diff| %.3g, %.2fs", queries_checked, worst,
              secs)};
}

// ---------------------------------------------------------------------------

Verdict metric_fixtures() {
  const MetricConfig cfg;
  const std::vector<std::string> ndcg_run{"x", "d1", "d2"};
  const double ndcg = ndcg_at_k(ndcg_run, {{"d1", 1}, {"d2", 1}}, 10, cfg);
  const std::vector<std::string> ap_run{"a", "b", "c"};
  const double ap = average_precision(ap_run, {{"a", 1}, {"c", 1}});
  const double rr = reciprocal_rank(ap_run, {{"c", 1}});
  std::vector<std::string> recall_run;
  for (int i = 0; i < 10; ++i) recall_run.push_back("d" + std::to_string(i));
  const double recall =
      recall_at_k(recall_run, {{"d1", 1}, {"d5", 1}, {"d8", 1}, {"x1", 1}, {"x2", 1}}, 10);

  bool ok = true;
  for (auto [got, want] : {std::pair{ndcg, 0.693427}, std::pair{ap, 0.833333},
                           std::pair{rr, 0.333333}, std::pair{recall, 0.6}})
    ok = ok && std::abs(got - want) < 1e-6;
  return {ok, fmt("nDCG %.7f, AP %.7f, RR %.7f, R@10 %.7f", ndcg, ap, rr, recall)};
}

// ---------------------------------------------------------------------------

Verdict exact_search() {
  const auto start = Clock::now();
  Rng rng(derive_seed(1, "acceptance.search"));
  std::size_t tied = 0;
  for (int instance = 0; instance < 50; ++instance) {
    // Sizes log-uniform up to the maximum, which the first instance uses.
    auto draw = [&](double max) {
      return static_cast<std::size_t>(std::exp(rng.uniform() * std::log(max))) + 1;
    };
    const std::size_t n_queries = instance == 0 ? 1000 : std::min<std::size_t>(draw(1000), 1000);
    const std::size_t n_docs = instance == 0 ? 10000 : std::min<std::size_t>(draw(10000), 10000);
    const std::size_t dim = 2 + rng.index(47);
    const std::size_t k = 1 + rng.index(100);
    const bool quantised = instance % 2 == 1;
    const EmbeddingMatrix docs = quantised
                                     ? t::quantised_unit(rng, Modality::Text, n_docs, dim, "d")
                                     : t::random_unit(rng, Modality::Text, n_docs, dim, "d");
    const EmbeddingMatrix queries = quantised
                                        ? t::quantised_unit(rng, Modality::Text, n_queries, dim, "q")
                                        : t::random_unit(rng, Modality::Text, n_queries, dim, "q");
    if (quantised) ++tied;

    const RunFile expected = t::naive_search(queries, docs, k, "acc");
    const SearchIndex index(docs);
    const RunFile single = batch_search(queries, index, k, "acc", 1);
    const RunFile multi = batch_search(queries, index, k, "acc", 4);
    if (!(single == expected))
      return {false, fmt("instance %d (%zu x %zu, dim %zu, k %zu) differs from the oracle",
                         instance, n_queries, n_docs, dim, k)};
    if (!(multi == single)) return {false, fmt("instance %d differs across thread counts", instance)};
  }
  const double secs = seconds_since(start);
  return {secs < 60.0, fmt("50 instances up to 1000 x 10000 (%zu with heavy ties), %.1fs", tied,
                           secs)};
}

// ---------------------------------------------------------------------------

Verdict mining() {
  Rng rng(derive_seed(1, "acceptance.mining"));
  std::size_t pools_checked = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const std::size_t n_docs = 20 + rng.index(400);
    const std::size_t n_queries = 5 + rng.index(30);
    const EmbeddingMatrix docs = t::quantised_unit(rng, Modality::Text, n_docs, 6, "d");
    const EmbeddingMatrix queries = t::random_unit(rng, Modality::Text, n_queries, 6, "q");
    Qrels qrels;
    for (std::size_t q = 0; q < n_queries; ++q)
      for (std::size_t j = 0; j < 1 + rng.index(8); ++j)
        qrels.set(queries.ids()[q], docs.ids()[rng.index(n_docs)], static_cast<int>(rng.index(4)));
    MiningConfig cfg{1 + rng.index(60), 1 + rng.index(4), rng.next_u64()};
    if (cfg.negatives_per_query > cfg.depth) cfg.depth = cfg.negatives_per_query;

    const SearchIndex index(docs);
    const MinedPools pools = mine_all(queries, index, qrels, cfg, 1 + rng.index(3));
    for (const auto& [qid, pool] : pools.pools) {
      std::vector<std::string> expected;
      for (const t::NaiveHit& h : t::naive_top_k(queries.at(qid), docs, cfg.depth))
        if (qrels.grade(qid, h.doc_id) == 0) expected.push_back(h.doc_id);
      if (pool != expected) return {false, "pool of " + qid + " differs from the oracle"};
      ++pools_checked;
    }
    const TripletSet a = build_triplets(qrels, pools.pools, index.ids(), cfg);
    for (const TrainingInstance& inst : a.instances)
      for (const std::string& n : inst.negative_ids)
        if (qrels.grade(inst.query_id, n) > 0)
          return {false, "negative " + n + " of " + inst.query_id + " is relevant"};
    const TripletSet b = build_triplets(qrels, mine_all(queries, index, qrels, cfg, 1).pools,
                                        index.ids(), cfg);
    if (serialize_triplets(a.instances) != serialize_triplets(b.instances))
      return {false, fmt("instance %d: triplet files differ under the same seed", instance)};
  }
  return {true, fmt("%zu pools equal the oracle; no relevant negatives; reproducible", pools_checked)};
}

// ---------------------------------------------------------------------------

Verdict gradients() {
  const auto start = Clock::now();
  Rng rng(derive_seed(1, "acceptance.gradients"));
  double worst = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t dim = 2 + rng.index(15);
    const std::size_t rank = 1 + rng.index(4);
    const double tau = instance % 2 ? 1.0 : 0.05;
    AdapterSet set;
    for (Modality m : kAllModalities) {
      Adapter a = identity_adapter(m, dim, rank, 0.5 + rng.uniform());
      for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = rng.gaussian(0.0, 0.5);
      for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = rng.gaussian(0.0, 0.5);
      set.adapters.emplace(m, std::move(a));
    }
    auto item = [&] {
      ModalityVectors v;
      for (Modality m : kAllModalities) {
        Vector x(static_cast<Eigen::Index>(dim));
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.gaussian();
        v[m] = x / x.norm();
      }
      return v;
    };
    InstanceVectors inst{item(), item(), {}};
    for (std::size_t j = 0; j < 3; ++j) inst.negatives.push_back(item());
    const ModalityMask mask = ModalityMask::from_bits(static_cast<std::uint8_t>(1 + rng.index(7)));

    const Vector analytic = info_nce_grad(inst, mask, set, tau).gradient.flatten();
    const Vector numeric = t::finite_difference_gradient(inst, mask, set, tau, 1e-6);
    worst = std::max(worst, t::max_relative_error(analytic, numeric, 1e-3));
  }
  const double secs = seconds_since(start);
  return {worst < 1e-5 && secs < 30.0,
          fmt("100 instances, max relative error %.3g, %.2fs", worst, secs)};
}

// ---------------------------------------------------------------------------

Verdict identity_at_init() {
  t::PlantedConfig pc;
  pc.queries = 60;
  pc.docs = 600;
  const Collection c = t::make_planted_collection(pc).collection;
  std::map<Modality, std::size_t> dims;
  for (Modality m : kAllModalities) dims[m] = c.docs_for(m).dim();
  FusionConfig fc;
  fc.seed = 123;
  const AdapterSet init = init_adapters(dims, fc);

  GridOptions options;
  options.depth = 100;
  options.threads = 2;
  std::size_t masks = 0;
  for (std::uint8_t bits = 1; bits < 8; ++bits) {
    const ModalityMask mask = ModalityMask::from_bits(bits);
    const auto raw = evaluate_config(c, {"run", std::nullopt, mask, std::nullopt}, options);
    const auto adapted = evaluate_config(c, {"run", ModalityMask::all(), mask, init}, options);
    if (serialize_run(raw.run) != serialize_run(adapted.run))
      return {false, "run files differ for mask " + to_string(mask)};
    ++masks;
  }
  return {true, fmt("run files byte-identical for all %zu inference masks", masks)};
}

// ---------------------------------------------------------------------------

Verdict planted_ordering() {
  const auto start = Clock::now();
  t::PlantedConfig pc;  // 200 queries, 2000 docs, dim 32
  const t::PlantedCollection planted = t::make_planted_collection(pc);
  std::vector<std::string> train_ids, test_ids;
  for (std::size_t i = 0; i < planted.collection.queries.size(); ++i)
    (i < pc.queries / 2 ? train_ids : test_ids).push_back(planted.collection.queries[i].query_id);
  const Collection train_c = t::subset_queries(planted.collection, train_ids);
  const Collection test_c = t::subset_queries(planted.collection, test_ids);

  const SearchIndex text_index(train_c.docs_for(Modality::Text));
  const MiningConfig mc{50, 3, 7};
  const MinedPools pools =
      mine_all(train_c.queries_for(Modality::Text), text_index, train_c.qrels, mc, 1);
  const auto triplets = build_triplets(train_c.qrels, pools.pools, text_index.ids(), mc).instances;

  FusionConfig fc;
  fc.temperature = 0.1;
  fc.learning_rate = 0.5;
  fc.epochs = 20;
  fc.batch_size = 16;
  fc.seed = 3;
  const TrainResult full = train(train_c, triplets, fc);
  fc.train_mask = fc.infer_mask = ModalityMask::only(Modality::Text);
  const TrainResult text = train(train_c, triplets, fc);

  const ModalityMask text_mask = ModalityMask::only(Modality::Text);
  const std::vector<GridConfig> configs{
      {"zero-shot text", std::nullopt, text_mask, std::nullopt},
      {"zero-shot full", std::nullopt, ModalityMask::all(), std::nullopt},
      {"trained text", text_mask, text_mask, text.adapters},
      {"trained full", ModalityMask::all(), ModalityMask::all(), full.adapters}};
  GridOptions options;
  const ExperimentGrid grid = run_grid(test_c, configs, options);
  const double zs_text = grid.rows[0].aggregate[Metric::NdcgCut];
  const double zs_full = grid.rows[1].aggregate[Metric::NdcgCut];
  const double tr_text = grid.rows[2].aggregate[Metric::NdcgCut];
  const double tr_full = grid.rows[3].aggregate[Metric::NdcgCut];

  const bool a = tr_full - tr_text >= 0.03;
  const bool b = tr_text - zs_text >= 0.2 && tr_full - zs_full >= 0.2;
  const bool c = full.stats.final_loss < 0.5 * full.stats.initial_loss &&
                 text.stats.final_loss < 0.5 * text.stats.initial_loss;
  const double secs = seconds_since(start);
  return {a && b && c && secs < 300.0,
          fmt("nDCG@10 full %.3f vs text %.3f (a %s); untrained text %.3f, full %.3f (b %s); "
              "loss full %.3f->%.3f, text %.3f->%.3f (c %s); %.1fs",
              tr_full, tr_text, a ? "ok" : "fail", zs_text, zs_full, b ? "ok" : "fail",
              full.stats.initial_loss, full.stats.final_loss, text.stats.initial_loss,
              text.stats.final_loss, c ? "ok" : "fail", secs)};
}

// ---------------------------------------------------------------------------

Verdict frame_plans() {
  for (std::size_t total = 1; total <= 10000; ++total) {
    const FramePlan p = plan_frame_samples(total, 24);
    if (p.indices.size() != 24) return {false, fmt("total %zu: %zu indices", total, p.indices.size())};
    for (std::size_t i = 0; i < 24; ++i) {
      if (p.indices[i] >= total) return {false, fmt("total %zu: index out of range", total)};
      if (i > 0 && p.indices[i] < p.indices[i - 1])
        return {false, fmt("total %zu: decreasing indices", total)};
      if (total >= 24 && i > 0 && p.indices[i] == p.indices[i - 1])
        return {false, fmt("total %zu: repeated index", total)};
    }
    if (total >= 24 && (p.indices.front() != 0 || p.indices.back() != total - 1))
      return {false, fmt("total %zu: endpoints missing", total)};
  }
  std::vector<std::size_t> identity(24), step2(24);
  for (std::size_t i = 0; i < 24; ++i) {
    identity[i] = i;
    step2[i] = 2 * i;
  }
  const bool fixtures = plan_frame_samples(24, 24).indices == identity &&
                        plan_frame_samples(47, 24).indices == step2 &&
                        plan_frame_samples(1, 24).indices == std::vector<std::size_t>(24, 0);
  return {fixtures, fixtures ? "all totals 1..10000 valid; fixtures exact" : "fixture mismatch"};
}

// ---------------------------------------------------------------------------

Verdict round_trips() {
  Rng rng(derive_seed(1, "acceptance.formats"));
  const char* failed = nullptr;
  for (int instance = 0; instance < 50 && !failed; ++instance) {
    RunFile run;
    for (std::size_t q = 0; q < 1 + rng.index(10); ++q) {
      const std::size_t depth = 1 + rng.index(20);
      double score = rng.gaussian() * 100.0;
      for (std::size_t r = 0; r < depth; ++r) {
        run.entries.push_back({t::make_id("q", q), t::make_id("d", rng.index(100000), 6),
                               static_cast<int>(r + 1), score, "tag" + std::to_string(instance)});
        score -= rng.uniform();
      }
    }
    const std::string run_text = serialize_run(run);
    if (serialize_run(parse_run(run_text)) != run_text) failed = "run file";

    Qrels qrels;
    for (std::size_t i = 0; i < rng.index(200); ++i)
      qrels.set(t::make_id("q", rng.index(30)), t::make_id("d", rng.index(500)),
                static_cast<int>(rng.index(4)));
    const std::string qrels_text = serialize_qrels(qrels);
    if (serialize_qrels(parse_qrels(qrels_text)) != qrels_text) failed = "qrels";

    std::vector<TrainingInstance> triplets;
    for (std::size_t i = 0; i < rng.index(40); ++i) {
      TrainingInstance ti{t::make_id("q", rng.index(50)), t::make_id("d", rng.index(500)), {}};
      for (std::size_t j = 0; j < 1 + rng.index(5); ++j)
        ti.negative_ids.push_back(t::make_id("d", rng.index(500)));
      triplets.push_back(ti);
    }
    const std::string trip_text = serialize_triplets(triplets);
    if (serialize_triplets(parse_triplets(trip_text)) != trip_text) failed = "triplets";

    AdapterSet set;
    set.train_mask = ModalityMask::from_bits(static_cast<std::uint8_t>(1 + rng.index(7)));
    set.infer_mask = ModalityMask::from_bits(static_cast<std::uint8_t>(1 + rng.index(7)));
    set.temperature = rng.uniform() + 1e-3;
    for (Modality m : set.train_mask.modalities()) {
      Adapter a = identity_adapter(m, 1 + rng.index(40), 1 + rng.index(8), rng.gaussian());
      for (Eigen::Index i = 0; i < a.down.size(); ++i) a.down.data()[i] = rng.gaussian();
      for (Eigen::Index i = 0; i < a.up.size(); ++i) a.up.data()[i] = rng.gaussian() * 1e-300;
      set.adapters.emplace(m, a);
    }
    const std::string adapter_bytes = serialize_adapters(set);
    if (serialize_adapters(parse_adapters(adapter_bytes)) != adapter_bytes) failed = "adapters";

    const RawMatrix raw = t::random_raw(rng, static_cast<Modality>(rng.index(3)),
                                        rng.index(200), 1 + rng.index(64), "e");
    const std::string payload = serialize_embedding_payload(raw);
    const std::string ids = serialize_embedding_ids(raw);
    const RawMatrix back = parse_embedding(payload, ids);
    if (serialize_embedding_payload(back) != payload || serialize_embedding_ids(back) != ids)
      failed = "embedding binary";
  }
  if (failed) return {false, std::string(failed) + " did not round-trip"};
  return {true, "run, qrels, triplets, adapters, embeddings: 50 random instances each"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"metric oracle equivalence", metric_oracle},
      {"hand-computed metric fixtures", metric_fixtures},
      {"exact-search equivalence", exact_search},
      {"mining correctness", mining},
      {"gradient audit", gradients},
      {"identity at init", identity_at_init},
      {"planted ordering", planted_ordering},
      {"frame-plan properties", frame_plans},
      {"format round-trips", round_trips}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
