#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "archrank/expdb.hpp"
#include "archrank/ranker.hpp"
#include "archrank/tasks.hpp"

namespace archrank::search {

struct SearchConfig {
  double step_size = 0.01;
  int max_iters = 500;
  double tolerance = 1e-6;  // stop once |delta u| falls below this
  int n_warm_tasks = 2;
  int n_top_per_task = 5;
  ranker::MetaSampling meta;  // how z is formed for the test task and for distances

  void validate() const;
};

// Value of a differentiable objective at u; writes its gradient.
using Objective = std::function<double(std::span<const double> u, std::vector<double>& grad)>;

struct AscentResult {
  std::vector<double> encoding;
  double score = 0.0;
  int iterations = 0;
  bool monotone = true;  // score never decreased between iterations
};

// u <- u + step * grad v(u) until |delta u| < tol or max_iters iterations.
// Throws NonFiniteError on a non-finite score or gradient.
AscentResult gradient_ascent(const Objective& objective, std::span<const double> start,
                             const SearchConfig& cfg);

// Ascent on the frozen ranker v(., z).
AscentResult gradient_ascent(const ranker::RankerWeights& weights, std::span<const double> z,
                             std::span<const double> start, const SearchConfig& cfg);

struct WarmStart {
  std::string source_task;
  std::vector<double> encoding;
  double recorded_performance = 0.0;
};

// The top n_top_per_task records (by performance) of each of the n_warm_tasks
// training tasks nearest to the test task in meta-feature space.
std::vector<WarmStart> warm_starts(const ranker::RankerWeights& weights,
                                   const expdb::ExperimentDB& db,
                                   const std::vector<tasks::TaskDataset>& training_tasks,
                                   const tasks::TaskDataset& test_task, const SearchConfig& cfg,
                                   std::uint64_t seed);

// Nearest-first ordering of training tasks, exposed for inspection.
std::vector<std::pair<std::string, double>> rank_tasks_by_distance(
    const ranker::RankerWeights& weights, const std::vector<tasks::TaskDataset>& training_tasks,
    const tasks::TaskDataset& test_task, const ranker::MetaSampling& meta, std::uint64_t seed);

struct Trajectory {
  std::string source_task;
  std::vector<double> start;
  double start_score = 0.0;
  int iterations = 0;
  double final_score = 0.0;
  bool monotone = true;
  std::optional<std::string> error;
};

struct SearchResult {
  std::vector<double> best_encoding;
  double best_score = 0.0;
  std::vector<double> meta_features;
  std::vector<Trajectory> trajectories;
};

// Online phase: multi-start ascent from the warm starts; returns the start
// with the highest final predicted score. Never trains a child model.
SearchResult search(const ranker::RankerWeights& weights, const expdb::ExperimentDB& db,
                    const std::vector<tasks::TaskDataset>& training_tasks,
                    const tasks::TaskDataset& test_task, const SearchConfig& cfg,
                    std::uint64_t seed);

// Ascent from explicit starts with a fixed z.
SearchResult search_from(const ranker::RankerWeights& weights, std::span<const double> z,
                         const std::vector<WarmStart>& starts, const SearchConfig& cfg);

std::string to_json(const SearchResult& result);

}  // namespace archrank::search
