#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fuserank/error.hpp"
#include "fuserank/formats.hpp"
#include "fuserank/fusion.hpp"
#include "fuserank/ingest.hpp"
#include "fuserank/metrics.hpp"
#include "fuserank/mining.hpp"
#include "fuserank/random.hpp"
#include "fuserank/report.hpp"
#include "fuserank/search.hpp"
#include "fuserank/train.hpp"

namespace fuserank::cli {

namespace fs = std::filesystem;

namespace {

// Raised for bad flag combinations detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::shared_ptr<spdlog::logger> logger() {
  if (auto existing = spdlog::get("fuserank")) return existing;
  auto log = spdlog::stderr_logger_mt("fuserank");
  log->set_pattern("[%l] %v");
  const char* env = std::getenv("FUSERANK_LOG");
  log->set_level(env ? spdlog::level::from_str(env) : spdlog::level::info);
  return log;
}

struct Common {
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  std::string config;
};

std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path, line_no, "expected key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    std::string key = trim(line.substr(0, eq));
    for (char& c : key)
      if (c == '_') c = '-';
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

// Fills options that were not given on the command line from the config
// file. Keys are long option names; unknown keys are ignored so one file can
// serve every subcommand.
void apply_config(CLI::App& app, CLI::App& sub, const std::map<std::string, std::string>& kv) {
  for (CLI::App* scope : {&app, &sub}) {
    for (CLI::Option* opt : scope->get_options()) {
      if (opt->count() > 0) continue;
      const std::string name = opt->get_single_name();
      auto it = kv.find(name);
      if (it == kv.end()) continue;
      opt->add_result(it->second);
      opt->run_callback();
    }
  }
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

ModalityMask mask_or_usage(const std::string& s, const char* flag) {
  try {
    return parse_mask(s);
  } catch (const DataError& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

// "<modality>=<path>"
std::map<Modality, fs::path> parse_assignments(const std::vector<std::string>& items,
                                               const char* flag) {
  std::map<Modality, fs::path> out;
  for (const std::string& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw UsageError(std::string(flag) + " expects <modality>=<path>, got '" + item + "'");
    Modality m;
    try {
      m = parse_modality(item.substr(0, eq));
    } catch (const DataError& e) {
      throw UsageError(std::string(flag) + ": " + e.what());
    }
    out[m] = item.substr(eq + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct IngestArgs {
  std::string docs, queries, qrels, frame_counts, mask, out;
  std::vector<std::string> doc_emb, query_emb;
  std::size_t samples = kDefaultFrameSamples;
};

int run_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  require(a.docs, "--docs");
  require(a.queries, "--queries");
  require(a.qrels, "--qrels");
  require(a.out, "--out");
  const auto doc_paths = parse_assignments(a.doc_emb, "--emb");
  const auto query_paths = parse_assignments(a.query_emb, "--query-emb");

  Collection c;
  c.docs = parse_documents(read_file(a.docs), a.docs);
  c.queries = parse_queries(read_file(a.queries), a.queries);
  c.qrels = parse_qrels(read_file(a.qrels), a.qrels);
  for (const auto& [m, path] : doc_paths) {
    RawMatrix raw = read_embedding_raw(path);
    if (raw.modality != m)
      throw DataError(path.string() + " holds " + std::string(to_string(raw.modality)) +
                      " embeddings, not " + std::string(to_string(m)));
    c.doc_embeddings.emplace(m, normalize_rows(raw));
  }
  for (const auto& [m, path] : query_paths) {
    RawMatrix raw = read_embedding_raw(path);
    if (raw.modality != m)
      throw DataError(path.string() + " holds " + std::string(to_string(raw.modality)) +
                      " embeddings, not " + std::string(to_string(m)));
    c.query_embeddings.emplace(m, normalize_rows(raw));
  }

  ModalityMask mask;
  if (!a.mask.empty()) {
    mask = mask_or_usage(a.mask, "--mask");
  } else {
    std::uint8_t bits = 0;
    for (const auto& [m, path] : doc_paths) bits |= ModalityMask::only(m).bits();
    mask = ModalityMask::from_bits(bits);
  }

  fs::create_directories(a.out);
  const ValidationReport report = validate_collection(c, mask);
  write_file(fs::path(a.out) / layout::kValidation, report.to_json());

  if (!a.frame_counts.empty()) {
    std::vector<std::pair<std::string, FramePlan>> plans;
    std::istringstream in(read_file(a.frame_counts));
    std::string doc_id;
    std::size_t frames = 0;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      std::istringstream fields(line);
      if (!(fields >> doc_id >> frames)) throw ParseError(a.frame_counts, line_no, "expected 'doc_id total_frames'");
      plans.emplace_back(doc_id, plan_frame_samples(frames, a.samples));
    }
    write_file(fs::path(a.out) / layout::kFrames, serialize_frame_manifest(plans));
  }

  if (!report.accepted()) {
    err << "validation failed with " << report.findings.size() << " finding(s):\n";
    for (const Finding& f : report.findings)
      err << "  " << to_string(f.kind) << " " << f.id << " (" << f.detail << ")\n";
    return kDataError;
  }
  save_collection(a.out, c);
  out << "ingested " << c.docs.size() << " documents, " << c.queries.size() << " queries into "
      << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct SearchArgs {
  std::string index, queries, mask, adapters, tag = "fuserank", out;
  std::size_t k = 10;
};

int run_search(const SearchArgs& a, const Common& common, std::ostream& out) {
  require(a.index, "--index");
  require(a.out, "--out");
  const Collection c = load_collection(a.index);
  RunFile run;
  if (!a.queries.empty()) {
    const EmbeddingMatrix queries = load_embedding(a.queries);
    SearchIndex index(c.docs_for(*queries.modality()));
    run = batch_search(queries, index, a.k, a.tag, common.threads);
  } else {
    std::optional<AdapterSet> adapters;
    if (!a.adapters.empty()) adapters = parse_adapters(read_file(a.adapters), a.adapters);
    ModalityMask mask = adapters ? adapters->infer_mask : ModalityMask::only(Modality::Text);
    if (!a.mask.empty()) mask = mask_or_usage(a.mask, "--mask");
    const AdapterSet* ad = adapters ? &*adapters : nullptr;
    const EmbeddingMatrix queries = fuse_matrix(c.query_embeddings, mask, ad, common.threads);
    SearchIndex index(fuse_matrix(c.doc_embeddings, mask, ad, common.threads));
    run = batch_search(queries, index, a.k, a.tag, common.threads);
  }
  write_file(a.out, serialize_run(run));
  out << "wrote " << run.entries.size() << " run lines to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct MineArgs {
  std::string index, qrels, modality = "text", out;
  std::size_t depth = 50, negs = 3;
};

int run_mine(const MineArgs& a, const Common& common, std::ostream& out) {
  require(a.index, "--index");
  require(a.out, "--out");
  Collection c = load_collection(a.index);
  if (!a.qrels.empty()) c.qrels = parse_qrels(read_file(a.qrels), a.qrels);
  const Modality m = parse_modality(a.modality);
  MiningConfig cfg{a.depth, a.negs, derive_seed(common.seed, "mine")};
  try {
    cfg.validate();
  } catch (const InvalidCount& e) {
    throw UsageError(e.what());
  }
  SearchIndex index(c.docs_for(m));
  const MinedPools pools = mine_all(c.queries_for(m), index, c.qrels, cfg, common.threads);
  const TripletSet triplets = build_triplets(c.qrels, pools.pools, index.ids(), cfg);
  write_file(a.out, serialize_triplets(triplets.instances));
  logger()->info("mined {} queries: {} without positives, {} without embeddings, {} empty pools",
                 pools.pools.size(), pools.skipped_no_positive.size(),
                 pools.skipped_no_embedding.size(), pools.empty_pools.size());
  out << "wrote " << triplets.instances.size() << " triplets (" << triplets.skipped
      << " skipped, " << triplets.filled_negatives << " sampled negatives) to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string collection, triplets, train_mask = "text,audio,video", infer_mask, out, stats;
  double tau = 0.05, lr = 1e-2, alpha = 1.0;
  std::size_t epochs = 5, rank = 8, batch_size = 32;
};

int run_train(const TrainArgs& a, const Common& common, std::ostream& out) {
  require(a.collection, "--collection");
  require(a.triplets, "--triplets");
  require(a.out, "--out");
  FusionConfig cfg;
  cfg.train_mask = mask_or_usage(a.train_mask, "--train-mask");
  cfg.infer_mask = a.infer_mask.empty() ? cfg.train_mask : mask_or_usage(a.infer_mask, "--infer-mask");
  cfg.temperature = a.tau;
  cfg.learning_rate = a.lr;
  cfg.alpha = a.alpha;
  cfg.epochs = a.epochs;
  cfg.rank = a.rank;
  cfg.batch_size = a.batch_size;
  cfg.seed = derive_seed(common.seed, "train");
  cfg.threads = common.threads;
  try {
    cfg.validate();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }

  const Collection c = load_collection(a.collection);
  const auto triplets = parse_triplets(read_file(a.triplets), a.triplets);
  const TrainResult result = train(c, triplets, cfg);
  for (const EpochStats& e : result.stats.epochs)
    logger()->info("epoch {}: loss {:.6f} grad {:.6f} ({:.2f}s)", e.epoch, e.mean_loss,
                   e.mean_grad_norm, e.seconds);
  write_file(a.out, serialize_adapters(result.adapters));

  if (!a.stats.empty()) {
    nlohmann::ordered_json j;
    j["instances"] = result.stats.instances;
    j["initial_loss"] = result.stats.initial_loss;
    j["final_loss"] = result.stats.final_loss;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const EpochStats& e : result.stats.epochs)
      j["epochs"].push_back({{"epoch", e.epoch},
                             {"mean_loss", e.mean_loss},
                             {"mean_grad_norm", e.mean_grad_norm}});
    write_file(a.stats, j.dump(2) + "\n");
  }
  out << "trained on " << result.stats.instances << " triplets: loss "
      << result.stats.initial_loss << " -> " << result.stats.final_loss << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string run, qrels, queries, out, gain = "exponential";
  std::size_t cutoff = 10, recall_cutoff = 0;
};

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  require(a.run, "--run");
  require(a.qrels, "--qrels");
  MetricConfig cfg;
  cfg.ndcg_cutoff = a.cutoff;
  cfg.recall_cutoff = a.recall_cutoff == 0 ? a.cutoff : a.recall_cutoff;
  if (a.gain == "linear") cfg.gain = Gain::Linear;
  else if (a.gain == "exponential" || a.gain == "exp") cfg.gain = Gain::Exponential;
  else throw UsageError("--gain must be 'exponential' or 'linear'");
  try {
    cfg.validate();
  } catch (const InvalidCount& e) {
    throw UsageError(e.what());
  }

  const Qrels qrels = parse_qrels(read_file(a.qrels), a.qrels);
  if (!a.queries.empty()) {
    const auto queries = parse_queries(read_file(a.queries), a.queries);
    std::set<std::string> known;
    for (const QueryMeta& q : queries) known.insert(q.query_id);
    std::vector<std::string> missing;
    for (const auto& [qid, judgments] : qrels.data())
      if (!known.contains(qid)) missing.push_back(qid);
    if (!missing.empty()) {
      err << "qrels reference " << missing.size() << " quer" << (missing.size() == 1 ? "y" : "ies")
          << " missing from " << a.queries << ":\n";
      for (const std::string& q : missing) err << "  " << q << "\n";
      return kDataError;
    }
  }

  const Evaluation eval = evaluate_run(parse_run(read_file(a.run), a.run), qrels, cfg);
  if (!a.out.empty()) write_file(a.out, serialize_per_query(eval, cfg));
  out << format_aggregates(eval, cfg);
  logger()->info("{} queries evaluated, {} without relevant documents, {} missing from run",
                 eval.per_query.size(), eval.no_relevant.size(), eval.missing_from_run.size());
  return kOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string grid, out, csv, grid_out;
};

int run_report(const ReportArgs& a, const Common& common, std::ostream& out) {
  require(a.grid, "--grid");
  const std::string text = read_file(a.grid);
  ExperimentGrid grid;
  if (is_grid_spec(text)) {
    const GridSpec spec = parse_grid_spec(text, fs::path(a.grid).parent_path());
    const Collection c = load_collection(spec.collection);
    std::vector<GridConfig> configs;
    for (const GridSpec::Entry& e : spec.configs) {
      GridConfig g{e.label, e.train_mask, e.infer_mask, std::nullopt};
      if (e.adapters) {
        g.adapters = parse_adapters(read_file(*e.adapters), e.adapters->string());
        if (!g.train_mask) g.train_mask = g.adapters->train_mask;
      }
      configs.push_back(std::move(g));
    }
    GridOptions options;
    options.metrics = spec.metrics;
    options.depth = spec.depth;
    options.threads = common.threads;
    options.run_dir = spec.run_dir;
    grid = run_grid(c, configs, options);
    if (!a.grid_out.empty()) write_file(a.grid_out, serialize_grid(grid));
  } else {
    grid = parse_grid(text);
  }
  const RenderedReport rendered = render(grid);
  if (!a.out.empty()) write_file(a.out, rendered.markdown);
  else out << rendered.markdown;
  if (!a.csv.empty()) write_file(a.csv, rendered.csv);
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"fuserank: multimodal dense retrieval, hard-negative mining, adapter training "
               "and IR evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Worker threads (0 = all cores)")
      ->capture_default_str();
  app.add_option("--seed", common.seed, "Global seed; each stage derives its own stream")
      ->capture_default_str();
  app.add_option("--config", common.config,
                 "key=value file; keys are long option names, command-line flags win");

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Load, validate and store a collection");
  ingest_cmd->add_option("--docs", ingest.docs, "Document metadata (JSON lines)");
  ingest_cmd->add_option("--queries", ingest.queries, "Query metadata (JSON lines)");
  ingest_cmd->add_option("--qrels", ingest.qrels, "Relevance judgments (TREC qrels)");
  ingest_cmd->add_option("--emb", ingest.doc_emb, "Document embeddings, <modality>=<path>");
  ingest_cmd->add_option("--query-emb", ingest.query_emb, "Query embeddings, <modality>=<path>");
  ingest_cmd->add_option("--mask", ingest.mask,
                         "Modalities to validate (default: those given with --emb)");
  ingest_cmd->add_option("--frame-counts", ingest.frame_counts,
                         "Lines 'doc_id total_frames'; writes frames.jsonl");
  ingest_cmd->add_option("--samples", ingest.samples, "Frames sampled per video")
      ->capture_default_str();
  ingest_cmd->add_option("--out", ingest.out, "Output collection directory");

  SearchArgs search;
  auto* search_cmd = app.add_subcommand("search", "Exact top-k retrieval into a TREC run file");
  search_cmd->add_option("--index", search.index, "Collection directory");
  search_cmd->add_option("--queries", search.queries,
                         "Query embedding file; searched against the same modality");
  search_cmd->add_option("--mask", search.mask,
                         "Fused modalities when --queries is absent (default: adapters' "
                         "inference mask, else text)");
  search_cmd->add_option("--adapters", search.adapters, "Trained adapters (ADPT1)");
  search_cmd->add_option("--k", search.k, "Results per query")->capture_default_str();
  search_cmd->add_option("--tag", search.tag, "Run tag")->capture_default_str();
  search_cmd->add_option("--out", search.out, "Output run file");

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand("mine", "Mine hard negatives and build training triplets");
  mine_cmd->add_option("--index", mine.index, "Collection directory");
  mine_cmd->add_option("--qrels", mine.qrels, "Qrels (default: the collection's)");
  mine_cmd->add_option("--modality", mine.modality, "Modality of the mining retriever")
      ->capture_default_str();
  mine_cmd->add_option("--depth", mine.depth, "Documents retrieved per query")
      ->capture_default_str();
  mine_cmd->add_option("--negs", mine.negs, "Hard negatives per training instance")
      ->capture_default_str();
  mine_cmd->add_option("--out", mine.out, "Output triplets (JSON lines)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train low-rank modality adapters with InfoNCE");
  train_cmd->add_option("--collection", tr.collection, "Collection directory");
  train_cmd->add_option("--triplets", tr.triplets, "Training triplets (JSON lines)");
  train_cmd->add_option("--train-mask", tr.train_mask, "Modalities used in training")
      ->capture_default_str();
  train_cmd->add_option("--infer-mask", tr.infer_mask,
                        "Modalities used at inference (default: the training mask)");
  train_cmd->add_option("--tau", tr.tau, "InfoNCE temperature")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "SGD learning rate")->capture_default_str();
  train_cmd->add_option("--epochs", tr.epochs, "Passes over the triplets")->capture_default_str();
  train_cmd->add_option("--rank", tr.rank, "Adapter rank")->capture_default_str();
  train_cmd->add_option("--alpha", tr.alpha, "Adapter scale")->capture_default_str();
  train_cmd->add_option("--batch-size", tr.batch_size, "Triplets per step")->capture_default_str();
  train_cmd->add_option("--stats", tr.stats, "Write per-epoch statistics (JSON)");
  train_cmd->add_option("--out", tr.out, "Output adapters (ADPT1)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a run: nDCG@k, AP, nDCG, RR, R@k");
  eval_cmd->add_option("--run", ev.run, "TREC run file");
  eval_cmd->add_option("--qrels", ev.qrels, "TREC qrels");
  eval_cmd->add_option("--queries", ev.queries,
                       "Query metadata; qrels naming unknown queries are rejected");
  eval_cmd->add_option("--cutoff", ev.cutoff, "nDCG cutoff")->capture_default_str();
  eval_cmd->add_option("--recall-cutoff", ev.recall_cutoff, "Recall cutoff (default: --cutoff)");
  eval_cmd->add_option("--gain", ev.gain, "Gain: exponential (2^g - 1) or linear")
      ->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Per-query scores (JSON lines)");

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Render the ablation grid as markdown and CSV");
  report_cmd->add_option("--grid", rep.grid, "Grid specification or evaluated grid (JSON)");
  report_cmd->add_option("--out", rep.out, "Markdown output (default: stdout)");
  report_cmd->add_option("--csv", rep.csv, "CSV output");
  report_cmd->add_option("--grid-out", rep.grid_out, "Evaluated grid (JSON) when running a spec");

  std::size_t selftest_instances = 20;
  auto* selftest_cmd =
      app.add_subcommand("selftest", "Check analytic gradients and metrics against oracles");
  selftest_cmd->add_option("--instances", selftest_instances, "Random gradient-check instances")
      ->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help is reported as a parse "error" with exit code 0.
    if (e.get_exit_code() == 0) {
      for (CLI::App* sub : app.get_subcommands())
        if (sub->parsed()) {
          out << sub->help();
          return kOk;
        }
      out << app.help();
      return kOk;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (!common.config.empty()) apply_config(app, *active, read_config(common.config));
    if (active == ingest_cmd) return run_ingest(ingest, out, err);
    if (active == search_cmd) return run_search(search, common, out);
    if (active == mine_cmd) return run_mine(mine, common, out);
    if (active == train_cmd) return run_train(tr, common, out);
    if (active == eval_cmd) return run_eval(ev, out, err);
    if (active == report_cmd) return run_report(rep, common, out);
    if (active == selftest_cmd)
      return run_selftest(selftest_instances, common.seed, out) ? kOk : kNumericFailure;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  }
  return kUsage;
}

}  // namespace fuserank::cli
