#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "archrank/eval.hpp"
#include "archrank/trainer.hpp"

using namespace archrank;

namespace {

struct Toy {
  std::vector<tasks::TaskDataset> tasks;
  expdb::ExperimentDB db{child::ArchSpace::desk()};
};

// Two tasks whose recorded performance is an exact linear function of u.
Toy linear_toy(int records_per_task) {
  Toy toy;
  tasks::TaskFamilyConfig cfg;
  cfg.num_tasks = 2;
  cfg.min_samples = 300;
  cfg.max_samples = 300;
  cfg.seed = 17;
  toy.tasks = tasks::generate_tasks(cfg);
  const std::size_t dim = child::ArchSpace::desk().encoding_dim();
  Rng rng(23);
  std::normal_distribution<double> normal;
  std::vector<double> direction(dim);
  double norm = 0.0;
  for (double& a : direction) norm += (a = normal(rng)) * a;
  for (double& a : direction) a /= std::sqrt(norm);
  for (const auto& t : toy.tasks) {
    for (int r = 0; r < records_per_task; ++r) {
      std::vector<double> u(dim);
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += direction[i] * (u[i] = normal(rng));
      // dot ~ N(0, 1); 0.5 + 0.1 dot stays inside [0, 1] for |dot| < 5.
      toy.db.add({t.task_id, u, 0.5 + 0.1 * dot, static_cast<std::uint64_t>(r), "toy", ""});
    }
  }
  return toy;
}

}  // namespace

TEST_CASE("zero steps return the initialization") {
  const auto toy = linear_toy(20);
  trainer::TrainConfig cfg;
  cfg.steps = 0;
  cfg.seed = 4;
  const auto w = trainer::train_ranker(toy.db, toy.tasks, cfg);
  CHECK(w == ranker::RankerWeights::init(8, 21, 4, cfg.init_scale));
}

TEST_CASE("linear ranking loss learns a perfectly predictable database") {
  const auto toy = linear_toy(100);
  trainer::TrainConfig cfg;
  cfg.steps = 2000;
  cfg.learning_rate = 0.01;
  cfg.momentum = 0.5;
  cfg.init_scale = 0.3;
  cfg.sample_batch = 64;
  cfg.seed = 1;
  const auto w = trainer::train_ranker(toy.db, toy.tasks, cfg);
  for (const auto& t : toy.tasks) {
    const auto z = ranker::task_centroid(w, t, {64, 10}, 2);
    std::vector<double> v, p;
    for (const auto& r : toy.db.records(t.task_id)) {
      v.push_back(ranker::score(w, r.encoding, z));
      p.push_back(r.performance);
    }
    const double rho = eval::spearman(v, p);
    INFO("task " << t.task_id << " spearman " << rho);
    CHECK(rho > 0.95);
  }
}

TEST_CASE("training is deterministic and reports every step") {
  const auto toy = linear_toy(30);
  trainer::TrainConfig cfg;
  cfg.steps = 50;
  cfg.sample_batch = 32;
  cfg.seed = 9;
  std::ostringstream log_a, log_b;
  trainer::MetricsCsv csv_a(log_a), csv_b(log_b);
  int seen = 0;
  const auto a = trainer::train_ranker(toy.db, toy.tasks, cfg, [&](const trainer::StepMetrics& m) {
    CHECK(m.step == seen++);
    CHECK(m.loss >= 0.0);
    csv_a(m);
  });
  const auto b = trainer::train_ranker(toy.db, toy.tasks, cfg, csv_b);
  CHECK(seen == 50);
  CHECK(a == b);
  CHECK(log_a.str() == log_b.str());
  CHECK(log_a.str().rfind("step,task,loss,n_pairs\n", 0) == 0);
  cfg.seed = 10;
  CHECK_FALSE(trainer::train_ranker(toy.db, toy.tasks, cfg) == a);
}

TEST_CASE("a database with no separable pairs trains without error") {
  Toy toy = linear_toy(2);
  expdb::ExperimentDB flat(child::ArchSpace::desk());
  for (const auto& [id, recs] : toy.db.by_task())
    for (auto r : recs) {
      r.performance = 0.5;
      flat.add(r);
    }
  trainer::TrainConfig cfg;
  cfg.steps = 5;
  cfg.sample_batch = 16;
  const auto w = trainer::train_ranker(flat, toy.tasks, cfg);
  // Zero gradients from rest leave the weights untouched.
  CHECK(w == ranker::RankerWeights::init(8, 21, cfg.seed, cfg.init_scale));
}

TEST_CASE("preconditions") {
  const auto toy = linear_toy(5);
  trainer::TrainConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS(trainer::train_ranker(toy.db, {toy.tasks[0]}, cfg));
  cfg.learning_rate = -1.0;
  CHECK_THROWS(trainer::train_ranker(toy.db, toy.tasks, cfg));
}
