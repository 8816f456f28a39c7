#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "archrank/expdb.hpp"
#include "archrank/losses.hpp"
#include "archrank/ranker.hpp"
#include "archrank/tasks.hpp"

namespace archrank::trainer {

struct TrainConfig {
  losses::LossConfig loss;
  double learning_rate = 1e-4;
  double momentum = 0.5;
  int steps = 20000;
  std::size_t record_batch = 32;
  // Task samples per meta-feature batch; 0 uses the whole train split.
  std::size_t sample_batch = 256;
  double init_scale = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepMetrics {
  int step = 0;
  std::string task_id;
  double loss = 0.0;
  std::size_t n_pairs = 0;
};

using StepObserver = std::function<void(const StepMetrics&)>;

// Offline phase. Each step picks one training task uniformly, a record
// mini-batch and a sample batch from that task, and takes one momentum step
// on phi and rho jointly.
ranker::RankerWeights train_ranker(const expdb::ExperimentDB& db,
                                   const std::vector<tasks::TaskDataset>& training_tasks,
                                   const TrainConfig& cfg, const StepObserver& observer = {});

// CSV metrics sink: "step,task,loss,n_pairs".
class MetricsCsv {
 public:
  explicit MetricsCsv(std::ostream& out);
  void operator()(const StepMetrics& m);

 private:
  std::ostream* out_;
};

}  // namespace archrank::trainer
