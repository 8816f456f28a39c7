#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "archrank/numerics.hpp"
#include "archrank/random.hpp"

namespace archrank::tasks {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

// Hidden generation parameters of a task. The analytic performance backend
// derives each task's optimal architecture from `latent`, and the same latent
// shapes the input distribution, so the optimum is predictable from samples.
struct TaskProfile {
  std::vector<double> latent;
  double difficulty = 0.0;

  friend bool operator==(const TaskProfile&, const TaskProfile&) = default;
};

// A labeled classification data set with disjoint train/val/test splits.
struct TaskDataset {
  std::string task_id;
  int num_classes = 0;
  num::Matrix features;  // one sample per row
  std::vector<int> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  TaskProfile profile;

  std::size_t num_samples() const { return labels.size(); }
  std::size_t input_dim() const { return features.cols(); }
  const std::vector<std::size_t>& split(Split s) const;

  // Checks the split and label invariants; throws ContractViolation.
  void validate() const;

  friend bool operator==(const TaskDataset&, const TaskDataset&) = default;
};

struct TaskFamilyConfig {
  int num_tasks = 6;
  int input_dim = 8;
  int min_classes = 2;
  int max_classes = 4;
  int min_samples = 600;
  int max_samples = 2000;
  // Distance of each class mean from the task center, in units of the
  // per-task noise scale.
  double class_separation = 3.0;
  // Base per-dimension standard deviation of every class cluster.
  double cluster_spread = 1.0;
  // Probability that a label is replaced by a different class.
  double label_noise = 0.0;
  // Dimension of the hidden task descriptor.
  int latent_dim = 3;
  // Scale of the task-center shift driven by the latent descriptor.
  double center_scale = 1.5;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-task Gaussian mixtures; a pure function of cfg.
std::vector<TaskDataset> generate_tasks(const TaskFamilyConfig& cfg);

struct Batch {
  num::Matrix x;
  std::vector<int> y;
  std::vector<std::size_t> index;  // row indices into the task's features
};

// Uniform sample without replacement from one split.
Batch sample_batch(const TaskDataset& task, Split split, std::size_t batch_size, Rng& rng);

// Every sample of one split, in split order.
Batch whole_split(const TaskDataset& task, Split split);

const TaskDataset& find_task(const std::vector<TaskDataset>& tasks, std::string_view task_id);

// JSON-lines: a {"kind":"task",...} line per task followed by one
// {"kind":"sample","task_id","split","x","y"} line per sample.
void write_tasks(std::ostream& out, const std::vector<TaskDataset>& tasks);
std::vector<TaskDataset> read_tasks(std::istream& in);
void save_tasks(const std::string& path, const std::vector<TaskDataset>& tasks);
std::vector<TaskDataset> load_tasks(const std::string& path);

}  // namespace archrank::tasks
