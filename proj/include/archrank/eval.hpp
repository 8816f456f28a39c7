#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "archrank/child.hpp"
#include "archrank/expdb.hpp"
#include "archrank/losses.hpp"
#include "archrank/ranker.hpp"
#include "archrank/search.hpp"
#include "archrank/tasks.hpp"
#include "archrank/trainer.hpp"

namespace archrank::eval {

// Thrown when a correlation is undefined (a constant input vector).
class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of the average-rank vectors.
double spearman(std::span<const double> x, std::span<const double> y);

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 when n == 1
  int count = 0;
};

std::optional<Summary> summarize(std::span<const double> values);

struct LooConfig {
  std::vector<losses::LossConfig> losses;
  int n_repeats = 10;
  trainer::TrainConfig train;  // loss field is replaced per cell
  search::SearchConfig search;
  // How z is formed when scoring the held-out task's records.
  ranker::MetaSampling eval_meta;
  std::uint64_t seed = 0;
  int jobs = 1;
  // Called for every training step of every cell with the held-out task id.
  // Must be thread safe when jobs > 1.
  std::function<void(const std::string& held_out, const trainer::StepMetrics&)> on_train_step;
};

struct CellResult {
  std::string task_id;
  losses::LossKind loss = losses::LossKind::l2;
  int repeat = 0;
  std::optional<double> spearman;
  std::optional<double> pearson;
  std::optional<double> search_performance;
  std::vector<double> found_encoding;
  std::vector<std::string> errors;
};

struct EvalRow {
  std::string task_id;
  losses::LossKind loss = losses::LossKind::l2;
  std::optional<Summary> spearman;
  std::optional<Summary> pearson;
  std::optional<Summary> search_performance;
  int n_repeats = 0;
  int n_failed = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // ordered by task_id, then loss order of the config
  std::vector<CellResult> cells;

  const EvalRow& row(const std::string& task_id, losses::LossKind loss) const;
};

// Holds out each task in turn, trains n_repeats rankers per loss on the
// remaining tasks, and measures rank correlation on the held-out records and
// the quality of the architecture found by search.
EvalReport leave_one_out(const std::vector<tasks::TaskDataset>& tasks,
                         const expdb::ExperimentDB& db, const child::PerfBackend& backend,
                         const LooConfig& cfg);

// Score the held-out records and correlate with their recorded performance.
struct Correlations {
  std::optional<double> spearman;
  std::optional<double> pearson;
};
Correlations correlate(std::span<const double> predicted, std::span<const double> recorded);

std::string report_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);
// Table-style text: task rows, one "mean ± std" column per loss.
std::string report_table(const EvalReport& report);

struct PcaPoint {
  std::string task_id;
  int batch = 0;
  double pc1 = 0.0;
  double pc2 = 0.0;
};

struct PcaResult {
  std::vector<PcaPoint> points;
  double variance_pc1 = 0.0;
  double variance_pc2 = 0.0;
};

// Projects centered vectors onto the top two covariance eigenvectors;
// missing components (rank < 2) are zero.
std::vector<std::array<double, 2>> pca_project(const std::vector<std::vector<double>>& vectors,
                                               double* variance_pc1 = nullptr,
                                               double* variance_pc2 = nullptr);

// Meta-features of n_batches random batches per task, projected to 2-D.
PcaResult pca_meta_features(const ranker::RankerWeights& weights,
                            const std::vector<tasks::TaskDataset>& tasks, std::size_t n_batches,
                            std::size_t batch_size, std::uint64_t seed);

std::string pca_csv(const PcaResult& result);

}  // namespace archrank::eval
