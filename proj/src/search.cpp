#include "archrank/search.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "archrank/error.hpp"

namespace archrank::search {

void SearchConfig::validate() const {
  require(step_size > 0.0, "search step size must be positive");
  require(max_iters >= 1, "search max_iters must be at least 1");
  require(tolerance >= 0.0, "search tolerance must be non-negative");
  require(n_warm_tasks >= 1 && n_top_per_task >= 1, "warm-start counts must be positive");
}

namespace {

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

AscentResult gradient_ascent(const Objective& objective, std::span<const double> start,
                             const SearchConfig& cfg) {
  cfg.validate();
  AscentResult r;
  r.encoding.assign(start.begin(), start.end());
  std::vector<double> grad;
  double value = objective(r.encoding, grad);
  for (int it = 0; it < cfg.max_iters; ++it) {
    if (!std::isfinite(value) || !finite(grad)) throw NonFiniteError("non-finite ascent gradient");
    require(grad.size() == r.encoding.size(), "objective gradient has the wrong length");
    double step_sq = 0.0;
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double delta = cfg.step_size * grad[i];
      r.encoding[i] += delta;
      step_sq += delta * delta;
    }
    r.iterations = it + 1;
    const double next = objective(r.encoding, grad);
    if (next < value) r.monotone = false;
    value = next;
    if (std::sqrt(step_sq) < cfg.tolerance) break;
  }
  if (!std::isfinite(value)) throw NonFiniteError("non-finite ascent score");
  r.score = value;
  return r;
}

AscentResult gradient_ascent(const ranker::RankerWeights& weights, std::span<const double> z,
                             std::span<const double> start, const SearchConfig& cfg) {
  require(start.size() == weights.encoding_dim,
          "search start has " + std::to_string(start.size()) + " entries, ranker expects " +
              std::to_string(weights.encoding_dim));
  const std::vector<double> zc(z.begin(), z.end());
  return gradient_ascent(
      [&weights, &zc](std::span<const double> u, std::vector<double>& g) {
        return ranker::score_with_gradient(weights, u, zc, g);
      },
      start, cfg);
}

std::vector<std::pair<std::string, double>> rank_tasks_by_distance(
    const ranker::RankerWeights& weights, const std::vector<tasks::TaskDataset>& training_tasks,
    const tasks::TaskDataset& test_task, const ranker::MetaSampling& meta, std::uint64_t seed) {
  const auto target = ranker::task_centroid(weights, test_task, meta, seed);
  std::vector<std::pair<std::string, double>> out;
  for (const auto& t : training_tasks) {
    require(t.task_id != test_task.task_id, "the test task cannot be a warm-start source");
    const auto c = ranker::task_centroid(weights, t, meta, seed);
    out.emplace_back(t.task_id, std::sqrt(num::squared_distance(c, target)));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return out;
}

std::vector<WarmStart> warm_starts(const ranker::RankerWeights& weights,
                                   const expdb::ExperimentDB& db,
                                   const std::vector<tasks::TaskDataset>& training_tasks,
                                   const tasks::TaskDataset& test_task, const SearchConfig& cfg,
                                   std::uint64_t seed) {
  cfg.validate();
  require(training_tasks.size() >= 2, "warm starts need at least 2 training tasks");
  const auto ranked = rank_tasks_by_distance(weights, training_tasks, test_task, cfg.meta, seed);
  std::vector<WarmStart> starts;
  const auto n_tasks = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(cfg.n_warm_tasks));
  for (std::size_t k = 0; k < n_tasks; ++k) {
    const auto& id = ranked[k].first;
    if (!db.contains(id)) continue;
    std::vector<const expdb::ExperimentRecord*> recs;
    for (const auto& r : db.records(id)) recs.push_back(&r);
    std::stable_sort(recs.begin(), recs.end(), [](const auto* a, const auto* b) {
      return a->performance > b->performance;
    });
    const auto n = std::min<std::size_t>(recs.size(), static_cast<std::size_t>(cfg.n_top_per_task));
    for (std::size_t i = 0; i < n; ++i) starts.push_back({id, recs[i]->encoding, recs[i]->performance});
  }
  return starts;
}

SearchResult search_from(const ranker::RankerWeights& weights, std::span<const double> z,
                         const std::vector<WarmStart>& starts, const SearchConfig& cfg) {
  SearchResult result;
  result.meta_features.assign(z.begin(), z.end());
  bool found = false;
  for (const auto& s : starts) {
    Trajectory t;
    t.source_task = s.source_task;
    t.start = s.encoding;
    try {
      t.start_score = ranker::score(weights, s.encoding, z);
      const auto a = gradient_ascent(weights, z, s.encoding, cfg);
      t.iterations = a.iterations;
      t.final_score = a.score;
      t.monotone = a.monotone;
      if (!found || a.score > result.best_score) {
        result.best_score = a.score;
        result.best_encoding = a.encoding;
        found = true;
      }
    } catch (const Error& e) {
      t.error = e.what();
    }
    result.trajectories.push_back(std::move(t));
  }
  if (!found) throw Error("search: every start aborted");
  return result;
}

SearchResult search(const ranker::RankerWeights& weights, const expdb::ExperimentDB& db,
                    const std::vector<tasks::TaskDataset>& training_tasks,
                    const tasks::TaskDataset& test_task, const SearchConfig& cfg,
                    std::uint64_t seed) {
  const auto starts = warm_starts(weights, db, training_tasks, test_task, cfg, seed);
  const auto z = ranker::task_centroid(weights, test_task, cfg.meta, mix_seed(seed, "test-z"));
  return search_from(weights, z, starts, cfg);
}

std::string to_json(const SearchResult& result) {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& t : result.trajectories) {
    nlohmann::json j = {{"source_task", t.source_task}, {"start", t.start},
                        {"start_score", t.start_score}, {"iterations", t.iterations},
                        {"final_score", t.final_score}, {"monotone", t.monotone}};
    if (t.error) j["error"] = *t.error;
    traj.push_back(std::move(j));
  }
  nlohmann::json j = {{"encoding", result.best_encoding},
                      {"score", result.best_score},
                      {"trajectories", traj}};
  return j.dump(2);
}

}  // namespace archrank::search
