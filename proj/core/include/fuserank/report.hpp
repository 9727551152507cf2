#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fuserank/fusion.hpp"
#include "fuserank/ingest.hpp"
#include "fuserank/metrics.hpp"

namespace fuserank {

// One column of the ablation grid. Without adapters the configuration is the
// untrained (zero-shot) model.
struct GridConfig {
  std::string label;
  std::optional<ModalityMask> train_mask;  // nullopt: zero-shot
  ModalityMask infer_mask = ModalityMask::all();
  std::optional<AdapterSet> adapters;
};

struct GridRow {
  std::string label;
  std::optional<ModalityMask> train_mask;
  ModalityMask infer_mask;
  MetricScores aggregate;
  std::size_t evaluated_queries = 0;
  std::vector<BreakdownRow> breakdown;  // of the nDCG@cutoff metric
  std::string run_path;                 // empty if the run was not written

  friend bool operator==(const GridRow&, const GridRow&) = default;
};

struct ExperimentGrid {
  MetricConfig metrics;
  std::vector<GridRow> rows;

  friend bool operator==(const ExperimentGrid& a, const ExperimentGrid& b) {
    return a.metrics.ndcg_cutoff == b.metrics.ndcg_cutoff &&
           a.metrics.recall_cutoff == b.metrics.recall_cutoff &&
           a.metrics.gain == b.metrics.gain && a.rows == b.rows;
  }
};

struct GridOptions {
  MetricConfig metrics;
  std::size_t depth = 1000;  // ranking depth of every run
  std::size_t threads = 0;
  std::optional<std::filesystem::path> run_dir;  // writes <label>.run when set
};

// Fuses queries and documents under each config's inference mask, searches,
// evaluates and breaks scores down by query category. Configs are
// independent of one another. Throws DataError on duplicate labels.
ExperimentGrid run_grid(const Collection& c, const std::vector<GridConfig>& configs,
                        const GridOptions& options);

// Same search and evaluation for a single config; returns the run as well.
struct ConfigResult {
  RunFile run;
  Evaluation evaluation;
};
ConfigResult evaluate_config(const Collection& c, const GridConfig& config,
                             const GridOptions& options);

struct RenderedReport {
  std::string markdown;
  std::string csv;
};

// Markdown holds the overall table (one row per config, five metric columns)
// and the breakdown table (one column per config). Cells print with three
// decimals; the CSV adds full-precision columns. Throws DataError on an
// empty grid.
RenderedReport render(const ExperimentGrid& grid);

// Parses the CSV written by render back into rows (label, masks, aggregate
// from the full-precision columns, run path).
std::vector<GridRow> parse_report_csv(std::string_view csv);

std::string serialize_grid(const ExperimentGrid& grid);
ExperimentGrid parse_grid(std::string_view json);

// Grid specification consumed by `fuserank report`:
//   {"collection": dir, "run_dir": dir, "depth": n, "cutoff": n,
//    "configs": [{"label", "infer_mask", "train_mask"?, "adapters"?}]}
// Relative paths resolve against base_dir.
struct GridSpec {
  std::filesystem::path collection;
  std::optional<std::filesystem::path> run_dir;
  std::size_t depth = 1000;
  MetricConfig metrics;
  struct Entry {
    std::string label;
    std::optional<ModalityMask> train_mask;
    ModalityMask infer_mask;
    std::optional<std::filesystem::path> adapters;
  };
  std::vector<Entry> configs;
};

// True if the JSON holds a specification (a "configs" array) rather than an
// evaluated grid (a "rows" array).
bool is_grid_spec(std::string_view json);
GridSpec parse_grid_spec(std::string_view json, const std::filesystem::path& base_dir);

}  // namespace fuserank
