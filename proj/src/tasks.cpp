#include "archrank/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "archrank/error.hpp"

namespace archrank::tasks {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ContractViolation("unknown split '" + std::string(name) + "'");
}

const std::vector<std::size_t>& TaskDataset::split(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

void TaskDataset::validate() const {
  const std::string where = "task '" + task_id + "': ";
  require(num_classes >= 2, where + "needs at least 2 classes");
  require(features.rows() == labels.size(), where + "feature/label count mismatch");
  require(features.all_finite(), where + "non-finite feature value");
  std::vector<int> seen(labels.size(), 0);
  for (const auto* part : {&train, &val, &test}) {
    for (std::size_t i : *part) {
      require(i < labels.size(), where + "split index out of range");
      require(seen[i]++ == 0, where + "splits overlap");
    }
  }
  require(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }),
          where + "splits do not cover all samples");
  std::vector<bool> in_train(static_cast<std::size_t>(num_classes), false);
  for (int y : labels) require(y >= 0 && y < num_classes, where + "label out of range");
  for (std::size_t i : train) in_train[static_cast<std::size_t>(labels[i])] = true;
  require(std::all_of(in_train.begin(), in_train.end(), [](bool b) { return b; }),
          where + "a class is missing from the train split");
}

void TaskFamilyConfig::validate() const {
  std::vector<std::string> problems;
  if (num_tasks < 1) problems.emplace_back("num_tasks must be >= 1");
  if (input_dim < 1) problems.emplace_back("input_dim must be >= 1");
  if (min_classes < 2 || max_classes < min_classes) problems.emplace_back("class range invalid");
  if (max_classes > input_dim) problems.emplace_back("max_classes cannot exceed input_dim");
  if (min_samples < 1 || max_samples < min_samples) problems.emplace_back("sample range invalid");
  if (min_samples < 3 * max_classes) {
    problems.emplace_back("min_samples must be at least 3 per class (classes > samples)");
  }
  if (cluster_spread <= 0.0) problems.emplace_back("cluster_spread must be positive");
  if (class_separation < 0.0) problems.emplace_back("class_separation must be >= 0");
  if (label_noise < 0.0 || label_noise > 1.0) problems.emplace_back("label_noise must lie in [0,1]");
  if (latent_dim < 1) problems.emplace_back("latent_dim must be >= 1");
  if (train_fraction <= 0.0 || val_fraction <= 0.0 || train_fraction + val_fraction >= 1.0) {
    problems.emplace_back("split fractions must be positive and leave room for a test split");
  }
  if (!problems.empty()) {
    std::string msg = "invalid task family config:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw ContractViolation(msg);
  }
}

namespace {

std::vector<std::vector<double>> orthonormal_directions(int count, int dim, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> dirs;
  while (static_cast<int>(dirs.size()) < count) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& e : v) e = normal(rng);
    for (const auto& d : dirs) {
      const double proj = num::dot(v, d);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * d[i];
    }
    const double norm = std::sqrt(num::dot(v, v));
    if (norm < 1e-8) continue;
    for (double& e : v) e /= norm;
    dirs.push_back(std::move(v));
  }
  return dirs;
}

TaskDataset generate_one(const TaskFamilyConfig& cfg, int k, const num::Matrix& center_map,
                         const num::Matrix& scale_map) {
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(k)));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const auto q = static_cast<std::size_t>(cfg.latent_dim);

  TaskDataset task;
  task.task_id = "task" + std::to_string(k);
  task.profile.latent.resize(q);
  for (double& e : task.profile.latent) e = normal(rng);
  task.profile.difficulty = unit(rng);
  task.num_classes = std::uniform_int_distribution<int>(cfg.min_classes, cfg.max_classes)(rng);
  const auto n = static_cast<std::size_t>(
      std::uniform_int_distribution<int>(cfg.min_samples, cfg.max_samples)(rng));

  std::vector<double> center(d, 0.0), sigma(d, 0.0);
  const double base_sigma = cfg.cluster_spread * (0.7 + 0.6 * task.profile.difficulty);
  for (std::size_t i = 0; i < d; ++i) {
    double shift = 0.0, log_scale = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      shift += center_map(i, j) * task.profile.latent[j];
      log_scale += scale_map(i, j) * task.profile.latent[j];
    }
    center[i] = shift;
    sigma[i] = base_sigma * std::exp(0.25 * log_scale);
  }
  const double separation =
      cfg.class_separation * cfg.cluster_spread * (1.2 - 0.6 * task.profile.difficulty);
  const auto dirs = orthonormal_directions(task.num_classes, cfg.input_dim, rng);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % task.num_classes);
  std::shuffle(labels.begin(), labels.end(), rng);

  task.features = num::Matrix(n, d);
  task.labels.resize(n);
  std::uniform_int_distribution<int> other(1, task.num_classes - 1);
  for (std::size_t s = 0; s < n; ++s) {
    const int y = labels[s];
    for (std::size_t i = 0; i < d; ++i) {
      task.features(s, i) =
          center[i] + separation * dirs[static_cast<std::size_t>(y)][i] + sigma[i] * normal(rng);
    }
    int observed = y;
    if (cfg.label_noise > 0.0 && unit(rng) < cfg.label_noise) {
      observed = (y + other(rng)) % task.num_classes;
    }
    task.labels[s] = observed;
  }

  // Stratified by true cluster so that every class lands in train.
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t s = 0; s < n; ++s) by_class[labels[s]].push_back(s);
  for (auto& [cls, idx] : by_class) {
    const std::size_t m = idx.size();
    auto n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(cfg.train_fraction * m)));
    auto n_val = static_cast<std::size_t>(std::round(cfg.val_fraction * m));
    if (n_train + n_val > m) n_val = m - n_train;
    for (std::size_t i = 0; i < m; ++i) {
      auto& target = i < n_train ? task.train : (i < n_train + n_val ? task.val : task.test);
      target.push_back(idx[i]);
    }
  }
  for (auto* part : {&task.train, &task.val, &task.test}) std::sort(part->begin(), part->end());
  // Label noise can strip a class from train; relabel one train sample so the
  // invariant holds.
  for (int c = 0; c < task.num_classes; ++c) {
    const bool present = std::any_of(task.train.begin(), task.train.end(),
                                     [&](std::size_t i) { return task.labels[i] == c; });
    if (!present) task.labels[by_class[c].front()] = c;
  }
  task.validate();
  return task;
}

}  // namespace

std::vector<TaskDataset> generate_tasks(const TaskFamilyConfig& cfg) {
  cfg.validate();
  Rng family(mix_seed(cfg.seed, "family"));
  std::normal_distribution<double> normal;
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const auto q = static_cast<std::size_t>(cfg.latent_dim);
  num::Matrix center_map(d, q), scale_map(d, q);
  const double norm = 1.0 / std::sqrt(static_cast<double>(q));
  for (double& e : center_map.flat()) e = cfg.center_scale * norm * normal(family);
  for (double& e : scale_map.flat()) e = norm * normal(family);

  std::vector<TaskDataset> out;
  out.reserve(static_cast<std::size_t>(cfg.num_tasks));
  for (int k = 0; k < cfg.num_tasks; ++k) out.push_back(generate_one(cfg, k, center_map, scale_map));
  return out;
}

namespace {

Batch gather(const TaskDataset& task, std::vector<std::size_t> index) {
  Batch b;
  b.x = num::Matrix(index.size(), task.input_dim());
  b.y.resize(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const auto src = task.features.row_span(index[r]);
    std::copy(src.begin(), src.end(), b.x.row_span(r).begin());
    b.y[r] = task.labels[index[r]];
  }
  b.index = std::move(index);
  return b;
}

}  // namespace

Batch sample_batch(const TaskDataset& task, Split split, std::size_t batch_size, Rng& rng) {
  const auto& part = task.split(split);
  require(batch_size <= part.size(), "sample_batch: batch of " + std::to_string(batch_size) +
                                         " exceeds " + std::string(to_string(split)) +
                                         " split size " + std::to_string(part.size()) +
                                         " of task '" + task.task_id + "'");
  const auto picks = sample_without_replacement(part.size(), batch_size, rng);
  std::vector<std::size_t> index(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) index[i] = part[picks[i]];
  return gather(task, std::move(index));
}

Batch whole_split(const TaskDataset& task, Split split) {
  return gather(task, task.split(split));
}

const TaskDataset& find_task(const std::vector<TaskDataset>& tasks, std::string_view task_id) {
  for (const auto& t : tasks) {
    if (t.task_id == task_id) return t;
  }
  throw ContractViolation("unknown task_id '" + std::string(task_id) + "'");
}

void write_tasks(std::ostream& out, const std::vector<TaskDataset>& tasks) {
  for (const auto& t : tasks) {
    json head = {{"kind", "task"},
                 {"task_id", t.task_id},
                 {"num_classes", t.num_classes},
                 {"input_dim", t.input_dim()},
                 {"latent", t.profile.latent},
                 {"difficulty", t.profile.difficulty}};
    out << head.dump() << '\n';
    std::vector<Split> where(t.num_samples(), Split::train);
    for (std::size_t i : t.val) where[i] = Split::val;
    for (std::size_t i : t.test) where[i] = Split::test;
    for (std::size_t s = 0; s < t.num_samples(); ++s) {
      const auto row = t.features.row_span(s);
      json line = {{"kind", "sample"},
                   {"task_id", t.task_id},
                   {"split", to_string(where[s])},
                   {"x", std::vector<double>(row.begin(), row.end())},
                   {"y", t.labels[s]}};
      out << line.dump() << '\n';
    }
  }
}

std::vector<TaskDataset> read_tasks(std::istream& in) {
  std::vector<TaskDataset> tasks;
  std::vector<std::vector<double>> rows;
  auto finish = [&]() {
    if (tasks.empty()) return;
    auto& t = tasks.back();
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    t.features = num::Matrix(rows.size(), d);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      require(rows[r].size() == d, "task '" + t.task_id + "': ragged sample vectors");
      std::copy(rows[r].begin(), rows[r].end(), t.features.row_span(r).begin());
    }
    rows.clear();
    t.validate();
  };
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "task") {
        finish();
        TaskDataset t;
        t.task_id = j.at("task_id").get<std::string>();
        t.num_classes = j.at("num_classes").get<int>();
        t.profile.latent = j.at("latent").get<std::vector<double>>();
        t.profile.difficulty = j.at("difficulty").get<double>();
        tasks.push_back(std::move(t));
      } else if (kind == "sample") {
        require(!tasks.empty() && tasks.back().task_id == j.at("task_id").get<std::string>(),
                "sample precedes its task header");
        auto& t = tasks.back();
        const std::size_t idx = t.labels.size();
        rows.push_back(j.at("x").get<std::vector<double>>());
        t.labels.push_back(j.at("y").get<int>());
        switch (split_from_string(j.at("split").get<std::string>())) {
          case Split::train: t.train.push_back(idx); break;
          case Split::val: t.val.push_back(idx); break;
          case Split::test: t.test.push_back(idx); break;
        }
      } else {
        throw ContractViolation("unknown record kind '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw Error("tasks file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  finish();
  return tasks;
}

void save_tasks(const std::string& path, const std::vector<TaskDataset>& tasks) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_tasks(out, tasks);
  if (!out) throw Error("failed writing '" + path + "'");
}

std::vector<TaskDataset> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_tasks(in);
}

}  // namespace archrank::tasks
