#include "fuserank/report.hpp"

#include <cstdio>
#include <set>

#include <json.hpp>

#include "fuserank/error.hpp"
#include "fuserank/formats.hpp"
#include "fuserank/search.hpp"

namespace fuserank {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::string full_precision(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string safe_name(std::string_view label) {
  std::string out;
  for (char c : label) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out.empty() ? std::string("run") : out;
}

std::string mask_cell(const std::optional<ModalityMask>& mask) {
  if (!mask) return "none";
  std::string out;
  for (Modality m : mask->modalities()) {
    if (!out.empty()) out += '+';
    out += to_string(m);
  }
  return out;
}

std::optional<ModalityMask> parse_mask_cell(std::string_view cell) {
  if (cell == "none" || cell.empty()) return std::nullopt;
  std::string s(cell);
  for (char& c : s)
    if (c == '+') c = ',';
  return parse_mask(s);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::vector<std::string>> parse_csv_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = true;
    } else if (c == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      field_started = false;
    } else if (c != '\r') {
      field += c;
      field_started = true;
    }
  }
  if (field_started || !record.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

ojson mask_json(const std::optional<ModalityMask>& mask) {
  if (!mask) return nullptr;
  return to_string(*mask);
}

std::optional<ModalityMask> mask_from_json(const ojson& j) {
  if (j.is_null()) return std::nullopt;
  return parse_mask(j.get<std::string>());
}

CategoryDimension parse_dimension(std::string_view s) {
  for (CategoryDimension d : kAllDimensions)
    if (to_string(d) == s) return d;
  throw DataError("unknown category dimension '" + std::string(s) + "'");
}

}  // namespace

ConfigResult evaluate_config(const Collection& c, const GridConfig& config,
                             const GridOptions& options) {
  const AdapterSet* adapters = config.adapters ? &*config.adapters : nullptr;
  const EmbeddingMatrix queries =
      fuse_matrix(c.query_embeddings, config.infer_mask, adapters, options.threads);
  SearchIndex index(fuse_matrix(c.doc_embeddings, config.infer_mask, adapters, options.threads));
  ConfigResult result;
  result.run = batch_search(queries, index, std::min(options.depth, index.size()),
                            safe_name(config.label), options.threads);
  result.evaluation = evaluate_run(result.run, c.qrels, options.metrics);
  return result;
}

ExperimentGrid run_grid(const Collection& c, const std::vector<GridConfig>& configs,
                        const GridOptions& options) {
  options.metrics.validate();
  std::set<std::string> labels;
  for (const GridConfig& cfg : configs)
    if (!labels.insert(cfg.label).second)
      throw DataError("duplicate grid label '" + cfg.label + "'");

  const QueryCategories categories = query_categories(c);
  ExperimentGrid grid;
  grid.metrics = options.metrics;
  for (const GridConfig& cfg : configs) {
    ConfigResult r = evaluate_config(c, cfg, options);
    GridRow row;
    row.label = cfg.label;
    row.train_mask = cfg.train_mask;
    row.infer_mask = cfg.infer_mask;
    row.aggregate = r.evaluation.aggregate;
    row.evaluated_queries = r.evaluation.per_query.size();
    row.breakdown = breakdown(r.evaluation.per_query, categories, Metric::NdcgCut);
    if (options.run_dir) {
      const fs::path path = *options.run_dir / (safe_name(cfg.label) + ".run");
      write_file(path, serialize_run(r.run));
      row.run_path = path.string();
    }
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

RenderedReport render(const ExperimentGrid& grid) {
  if (grid.rows.empty()) throw DataError("cannot render an empty grid");
  const MetricConfig& mc = grid.metrics;
  RenderedReport out;

  // Overall table.
  std::string& md = out.markdown;
  md += "## Overall scores\n\n| Config | Training | Inference |";
  for (Metric m : kAllMetrics) md += " " + metric_name(m, mc) + " |";
  md += "\n|---|---|---|";
  for (std::size_t i = 0; i < kAllMetrics.size(); ++i) md += "---:|";
  md += "\n";
  for (const GridRow& row : grid.rows) {
    md += "| " + row.label + " | " + (row.train_mask ? to_string(*row.train_mask) : "zero-shot") +
          " | " + to_string(row.infer_mask) + " |";
    for (Metric m : kAllMetrics) md += " " + fixed3(row.aggregate[m]) + " |";
    md += "\n";
  }

  // Breakdown table: one column per config.
  md += "\n## Breakdown (" + metric_name(Metric::NdcgCut, mc) + ")\n\n|  |  |";
  for (const GridRow& row : grid.rows) md += " " + row.label + " |";
  md += "\n|---|---|";
  for (std::size_t i = 0; i < grid.rows.size(); ++i) md += ":---:|";
  md += "\n";
  for (const char* stage : {"Training data", "Inference data"}) {
    for (Modality m : {Modality::Text, Modality::Audio, Modality::Video}) {
      md += std::string("| ") + stage + " | " + std::string(to_string(m)) + " |";
      for (const GridRow& row : grid.rows) {
        const bool on = stage[0] == 'T' ? (row.train_mask && row.train_mask->enabled(m))
                                        : row.infer_mask.enabled(m);
        md += on ? " ✓ |" : "  |";
      }
      md += "\n";
    }
  }
  for (CategoryDimension dim : kAllDimensions) {
    for (std::string_view label : declared_labels(dim)) {
      bool any = false;
      std::string line = "| " + std::string(to_string(dim)) + " | " + std::string(label) + " |";
      for (const GridRow& row : grid.rows) {
        auto it = std::find_if(row.breakdown.begin(), row.breakdown.end(),
                               [&](const BreakdownRow& b) {
                                 return b.dimension == dim && b.label == label;
                               });
        if (it == row.breakdown.end()) {
          line += " - |";
        } else {
          line += " " + fixed3(it->value) + " |";
          any = true;
        }
      }
      if (any) md += line + "\n";
    }
  }
  for (Metric m : kAllMetrics) {
    md += "| Overall | " + metric_name(m, mc) + " |";
    for (const GridRow& row : grid.rows) md += " " + fixed3(row.aggregate[m]) + " |";
    md += "\n";
  }

  // CSV.
  std::string& csv = out.csv;
  csv += "config,train_mask,infer_mask";
  for (Metric m : kAllMetrics) csv += "," + metric_name(m, mc);
  for (Metric m : kAllMetrics) csv += "," + metric_name(m, mc) + "_full";
  csv += ",queries,run\n";
  for (const GridRow& row : grid.rows) {
    csv += csv_field(row.label) + "," + mask_cell(row.train_mask) + "," +
           mask_cell(row.infer_mask);
    for (Metric m : kAllMetrics) csv += "," + fixed3(row.aggregate[m]);
    for (Metric m : kAllMetrics) csv += "," + full_precision(row.aggregate[m]);
    csv += "," + std::to_string(row.evaluated_queries) + "," + csv_field(row.run_path) + "\n";
  }
  return out;
}

std::vector<GridRow> parse_report_csv(std::string_view csv) {
  const auto records = parse_csv_records(csv);
  if (records.empty()) throw ParseError("report csv is empty");
  constexpr std::size_t kColumns = 3 + 5 + 5 + 2;
  std::vector<GridRow> rows;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& f = records[r];
    if (f.size() != kColumns)
      throw ParseError("report csv", r + 1, "expected " + std::to_string(kColumns) + " fields");
    GridRow row;
    row.label = f[0];
    row.train_mask = parse_mask_cell(f[1]);
    auto infer = parse_mask_cell(f[2]);
    if (!infer) throw ParseError("report csv", r + 1, "missing inference mask");
    row.infer_mask = *infer;
    for (std::size_t i = 0; i < 5; ++i) row.aggregate.values[i] = std::stod(f[8 + i]);
    row.evaluated_queries = static_cast<std::size_t>(std::stoull(f[13]));
    row.run_path = f[14];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string serialize_grid(const ExperimentGrid& grid) {
  ojson j;
  j["metrics"] = {{"ndcg_cutoff", grid.metrics.ndcg_cutoff},
                  {"recall_cutoff", grid.metrics.recall_cutoff},
                  {"gain", grid.metrics.gain == Gain::Exponential ? "exponential" : "linear"}};
  j["rows"] = ojson::array();
  for (const GridRow& row : grid.rows) {
    ojson r;
    r["label"] = row.label;
    r["train_mask"] = mask_json(row.train_mask);
    r["infer_mask"] = to_string(row.infer_mask);
    r["aggregate"] = ojson::object();
    for (Metric m : kAllMetrics) r["aggregate"][metric_name(m, grid.metrics)] = row.aggregate[m];
    r["evaluated_queries"] = row.evaluated_queries;
    r["breakdown"] = ojson::array();
    for (const BreakdownRow& b : row.breakdown)
      r["breakdown"].push_back({{"dimension", std::string(to_string(b.dimension))},
                                {"label", b.label},
                                {"queries", b.queries},
                                {"value", b.value}});
    r["run_path"] = row.run_path;
    j["rows"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

ExperimentGrid parse_grid(std::string_view json) {
  try {
    const ojson j = ojson::parse(json);
    ExperimentGrid grid;
    const ojson& mc = j.at("metrics");
    grid.metrics.ndcg_cutoff = mc.at("ndcg_cutoff").get<std::size_t>();
    grid.metrics.recall_cutoff = mc.at("recall_cutoff").get<std::size_t>();
    grid.metrics.gain = mc.at("gain").get<std::string>() == "linear" ? Gain::Linear
                                                                      : Gain::Exponential;
    for (const ojson& r : j.at("rows")) {
      GridRow row;
      row.label = r.at("label").get<std::string>();
      row.train_mask = mask_from_json(r.at("train_mask"));
      row.infer_mask = parse_mask(r.at("infer_mask").get<std::string>());
      for (Metric m : kAllMetrics)
        row.aggregate[m] = r.at("aggregate").at(metric_name(m, grid.metrics)).get<double>();
      row.evaluated_queries = r.at("evaluated_queries").get<std::size_t>();
      for (const ojson& b : r.at("breakdown"))
        row.breakdown.push_back({parse_dimension(b.at("dimension").get<std::string>()),
                                 b.at("label").get<std::string>(),
                                 b.at("queries").get<std::size_t>(), b.at("value").get<double>()});
      row.run_path = r.value("run_path", "");
      grid.rows.push_back(std::move(row));
    }
    return grid;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("grid: ") + e.what());
  }
}

bool is_grid_spec(std::string_view json) {
  try {
    const ojson j = ojson::parse(json);
    return j.is_object() && j.contains("configs");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("grid: ") + e.what());
  }
}

GridSpec parse_grid_spec(std::string_view json, const fs::path& base_dir) {
  const auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    const ojson j = ojson::parse(json);
    GridSpec spec;
    spec.collection = resolve(j.at("collection").get<std::string>());
    if (j.contains("run_dir")) spec.run_dir = resolve(j.at("run_dir").get<std::string>());
    spec.depth = j.value("depth", spec.depth);
    spec.metrics.ndcg_cutoff = j.value("cutoff", spec.metrics.ndcg_cutoff);
    spec.metrics.recall_cutoff = j.value("recall_cutoff", spec.metrics.ndcg_cutoff);
    if (j.value("gain", std::string("exponential")) == "linear") spec.metrics.gain = Gain::Linear;
    for (const ojson& c : j.at("configs")) {
      GridSpec::Entry e;
      e.label = c.at("label").get<std::string>();
      e.infer_mask = parse_mask(c.at("infer_mask").get<std::string>());
      if (c.contains("train_mask")) e.train_mask = mask_from_json(c.at("train_mask"));
      if (c.contains("adapters") && !c.at("adapters").is_null())
        e.adapters = resolve(c.at("adapters").get<std::string>());
      spec.configs.push_back(std::move(e));
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("grid spec: ") + e.what());
  }
}

}  // namespace fuserank
