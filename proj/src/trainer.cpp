#include "archrank/trainer.hpp"

#include <iostream>

#include "archrank/error.hpp"
#include "archrank/optim.hpp"

namespace archrank::trainer {

using num::Matrix;
using num::NodeId;

void TrainConfig::validate() const {
  loss.validate();
  require(learning_rate > 0.0, "learning rate must be positive");
  require(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
  require(steps >= 0, "steps must be non-negative");
  require(record_batch >= 1, "record batch must be at least 1");
  require(init_scale > 0.0, "init scale must be positive");
}

ranker::RankerWeights train_ranker(const expdb::ExperimentDB& db,
                                   const std::vector<tasks::TaskDataset>& training_tasks,
                                   const TrainConfig& cfg, const StepObserver& observer) {
  cfg.validate();
  require(training_tasks.size() >= 2, "train_ranker needs at least 2 training tasks");
  require(db.space().has_value(), "experiment db has no arch space");
  for (const auto& t : training_tasks) {
    require(db.contains(t.task_id) && db.records(t.task_id).size() >= 2,
            "task '" + t.task_id + "' needs at least 2 experiment records");
    require(t.input_dim() == training_tasks.front().input_dim(), "tasks disagree on input_dim");
  }
  const std::size_t u_dim = db.space()->encoding_dim();
  ranker::RankerWeights weights = ranker::RankerWeights::init(
      training_tasks.front().input_dim(), u_dim, cfg.seed, cfg.init_scale);
  auto params = weights.params();
  num::MomentumState state{cfg.momentum, cfg.learning_rate, {}};

  Rng rng(mix_seed(cfg.seed, "train-ranker"));
  std::uniform_int_distribution<std::size_t> pick_task(0, training_tasks.size() - 1);
  std::size_t steps_with_pairs = 0;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto& task = training_tasks[pick_task(rng)];
    const auto records = expdb::batch_for_task(db, task.task_id, cfg.record_batch, rng);
    Matrix encodings(records.size(), u_dim);
    std::vector<double> perf(records.size());
    for (std::size_t r = 0; r < records.size(); ++r) {
      std::copy(records[r].encoding.begin(), records[r].encoding.end(),
                encodings.row_span(r).begin());
      perf[r] = records[r].performance;
    }
    const auto samples =
        cfg.sample_batch == 0
            ? tasks::whole_split(task, tasks::Split::train)
            : tasks::sample_batch(task, tasks::Split::train,
                                  std::min(cfg.sample_batch, task.train.size()), rng);

    num::Tape tape;
    const auto bound = ranker::bind(tape, weights, true);
    const NodeId z = ranker::meta_features(tape, bound, tape.constant(samples.x));
    const NodeId v = ranker::score(tape, bound, tape.constant(std::move(encodings)), z);
    const auto loss = losses::batch_loss(tape, v, perf, cfg.loss);
    if (loss.n_terms > 0) ++steps_with_pairs;
    // A pairless batch backpropagates zeros; velocity still decays.
    tape.backward(loss.loss);
    num::sgd_momentum_step(params, bound.grads(tape), state);
    if (observer) observer(StepMetrics{step, task.task_id, tape.value(loss.loss)[0], loss.n_terms});
  }
  if (cfg.steps > 0 && steps_with_pairs == 0) {
    std::cerr << "warning: no training step produced any gap-passing pair\n";
  }
  return weights;
}

MetricsCsv::MetricsCsv(std::ostream& out) : out_(&out) { *out_ << "step,task,loss,n_pairs\n"; }

void MetricsCsv::operator()(const StepMetrics& m) {
  *out_ << m.step << ',' << m.task_id << ',' << m.loss << ',' << m.n_pairs << '\n';
}

}  // namespace archrank::trainer
