// Acceptance run: one PASS/FAIL line per criterion. Criteria 6, 7 and 9 run
// the full desk-scale leave-one-out benchmark (twice for 9), which dominates
// the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "archrank/config.hpp"
#include "archrank/eval.hpp"
#include "archrank/pipeline.hpp"
#include "support/finite_difference.hpp"
#include "support/kinks.hpp"

using namespace archrank;
using losses::LossKind;
using num::Matrix;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (double& v : m.flat()) v = n(rng);
  return m;
}

std::vector<double> backprop_grads(const std::vector<double>& v, const std::vector<double>& p,
                                   const losses::LossConfig& cfg, losses::Reduction red,
                                   double* loss) {
  num::Tape t;
  Matrix init(v.size(), 1);
  std::copy(v.begin(), v.end(), init.flat().begin());
  const auto s = t.variable(init);
  const auto out = losses::batch_loss(t, s, p, cfg, red);
  t.backward(out.loss);
  if (loss) *loss = t.value(out.loss)[0];
  return {t.grad(s).flat().begin(), t.grad(s).flat().end()};
}

losses::ScoredPair pair_at(double d) { return {0, 1, d, 0.0, 0.9, 0.1}; }

// 1 ---------------------------------------------------------------------------
Verdict loss_exactness() {
  const double m = 0.3;
  struct Case {
    const char* name;
    double got, want;
  };
  const Case cases[] = {
      {"L(0.7)", losses::linear_rank_loss(pair_at(0.7), m), 0.0},
      {"L(0)", losses::linear_rank_loss(pair_at(0.0), m), 0.3},
      {"L(-0.1)", losses::linear_rank_loss(pair_at(-0.1), m), 0.4},
      {"Q(0.3)", losses::quadratic_rank_loss(pair_at(0.3), m), 0.0},
      {"Q(0)", losses::quadratic_rank_loss(pair_at(0.0), m), 0.3},
      {"Q(-0.1)", losses::quadratic_rank_loss(pair_at(-0.1), m), 0.16 / 0.3},
      {"l2(0.2,0.5)", losses::l2_loss(0.2, 0.5), 0.09},
  };
  double worst = 0.0;
  for (const auto& c : cases) worst = std::max(worst, std::abs(c.got - c.want));
  return {worst <= 1e-12, "max abs error " + fmt(worst) + " over 7 hand-computed values"};
}

// 2 ---------------------------------------------------------------------------
Verdict gradient_oracle() {
  Rng rng(mix_seed(2, "acceptance"));
  std::normal_distribution<double> n(0.0, 0.4);
  std::uniform_real_distribution<double> unit;
  std::uniform_int_distribution<int> size(2, 32);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto len = static_cast<std::size_t>(size(rng));
    std::vector<double> v(len), p(len);
    for (auto& x : v) x = n(rng);
    for (auto& x : p) x = unit(rng);
    for (auto kind : {LossKind::linear_rank, LossKind::quadratic_rank}) {
      const auto closed = losses::closed_form_grads(v, losses::filter_pairs(v, p, 0.01), 0.3, kind);
      const auto back = backprop_grads(v, p, {kind, 0.3, 0.01}, losses::Reduction::sum, nullptr);
      for (std::size_t i = 0; i < len; ++i) worst = std::max(worst, std::abs(closed[i] - back[i]));
    }
  }
  return {worst <= 1e-10, "max |backprop - closed form| " + fmt(worst) + " over 1000 batches x 2 losses"};
}

// 3 ---------------------------------------------------------------------------
Verdict finite_differences() {
  Rng rng(mix_seed(3, "acceptance"));
  std::uniform_real_distribution<double> unit;
  double worst = 0.0;
  int configs = 0, rejected = 0;
  for (std::uint64_t trial = 0; configs < 100; ++trial) {
    auto w = ranker::RankerWeights::init(5, 21, mix_seed(3, trial), 0.4);
    Matrix samples = random_matrix(12, 5, rng);
    Matrix us = random_matrix(6, 21, rng);
    std::vector<double> perfs(6);
    for (double& p : perfs) p = unit(rng);
    Matrix u = random_matrix(1, 21, rng);
    // Central differences are no oracle across a relu or hinge kink; draws
    // with any kink closer than 1e-4 are redrawn.
    const losses::LossConfig lin{LossKind::linear_rank, 0.3, 0.01};
    if (std::min(testing::kink_distance(w, samples, us, perfs, &lin),
                 testing::kink_distance(w, samples, u, {}, nullptr)) < 1e-4) {
      ++rejected;
      continue;
    }

    for (auto kind : {LossKind::linear_rank, LossKind::quadratic_rank}) {
      const losses::LossConfig cfg{kind, 0.3, 0.01};
      auto build = [&](num::Tape& t, ranker::BoundRanker& bound, num::NodeId& u_node) {
        bound = ranker::bind(t, w, true);
        u_node = t.variable(us);
        const auto z = ranker::meta_features(t, bound, t.constant(samples));
        return losses::batch_loss(t, ranker::score(t, bound, u_node, z), perfs, cfg).loss;
      };
      num::Tape tape;
      ranker::BoundRanker bound;
      num::NodeId u_node = 0;
      tape.backward(build(tape, bound, u_node));
      const auto grads = bound.grads(tape);
      auto value = [&] {
        num::Tape t;
        ranker::BoundRanker b;
        num::NodeId n = 0;
        return t.value(build(t, b, n))[0];
      };
      const auto tensors = w.tensors();
      for (std::size_t k = 0; k < tensors.size(); ++k)
        worst = std::max(worst, testing::max_relative_error(grads[k], testing::central_difference(value, *tensors[k])));
      worst = std::max(worst, testing::max_relative_error(tape.grad(u_node), testing::central_difference(value, us)));
    }

    // Raw score v(u, z) with respect to u and every weight.
    auto build_v = [&](num::Tape& t, ranker::BoundRanker& bound, num::NodeId& u_node) {
      bound = ranker::bind(t, w, true);
      u_node = t.variable(u);
      const auto z = ranker::meta_features(t, bound, t.constant(samples));
      return t.sum(ranker::score(t, bound, u_node, z));
    };
    num::Tape tape;
    ranker::BoundRanker bound;
    num::NodeId u_node = 0;
    tape.backward(build_v(tape, bound, u_node));
    const auto grads = bound.grads(tape);
    auto value = [&] {
      num::Tape t;
      ranker::BoundRanker b;
      num::NodeId n = 0;
      return t.value(build_v(t, b, n))[0];
    };
    const auto tensors = w.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k)
      worst = std::max(worst, testing::max_relative_error(grads[k], testing::central_difference(value, *tensors[k])));
    worst = std::max(worst, testing::max_relative_error(tape.grad(u_node), testing::central_difference(value, u)));
    ++configs;
  }
  return {worst < 1e-5, "max relative error " + fmt(worst) + " over " + std::to_string(configs) +
                            " configurations (v, linear, quadratic; u, phi, rho); " +
                            std::to_string(rejected) + " near-kink draws redrawn"};
}

// 4 ---------------------------------------------------------------------------
Verdict deep_set_invariance() {
  Rng rng(mix_seed(4, "acceptance"));
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto w = ranker::RankerWeights::init(8, 21, static_cast<std::uint64_t>(trial), 0.4);
    const Matrix batch = random_matrix(64, 8, rng);
    std::vector<std::size_t> order(64);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix shuffled(64, 8);
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 8; ++c) shuffled(r, c) = batch(order[r], c);
    const auto a = ranker::meta_features(w, batch), b = ranker::meta_features(w, shuffled);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }

  tasks::TaskFamilyConfig tcfg;
  tcfg.num_tasks = 4;
  tcfg.min_samples = 200;
  tcfg.max_samples = 300;
  tcfg.seed = 4;
  const auto ts = tasks::generate_tasks(tcfg);
  const child::AnalyticBackend backend(child::ArchSpace::desk(), ts, child::AnalyticParams{});
  const auto db = expdb::populate(ts, child::ArchSpace::desk(), backend, {30, 4, 1});
  eval::LooConfig cfg;
  cfg.losses = {{LossKind::linear_rank, 0.3, 0.01}};
  cfg.n_repeats = 2;
  cfg.train.steps = 200;
  cfg.train.sample_batch = 32;
  cfg.search.max_iters = 5;
  cfg.search.meta = cfg.eval_meta = {32, 2};
  std::size_t steps = 0, leaks = 0;
  cfg.on_train_step = [&](const std::string& held_out, const trainer::StepMetrics& m) {
    ++steps;
    leaks += m.task_id == held_out;
  };
  (void)eval::leave_one_out(ts, db, backend, cfg);
  const bool pass = worst <= 1e-9 && steps == 4 * 2 * 200 && leaks == 0;
  return {pass, "max |z - z_perm| " + fmt(worst) + "; " + std::to_string(steps) +
                    " observed training steps, " + std::to_string(leaks) + " on a held-out task"};
}

// 5 ---------------------------------------------------------------------------
Verdict gap_filtering() {
  Rng rng(mix_seed(5, "acceptance"));
  std::uniform_real_distribution<double> unit;
  std::normal_distribution<double> n;
  bool zero_ok = true;
  for (int trial = 0; trial < 500; ++trial) {
    const double base = unit(rng) * 0.98;
    std::vector<double> v(8), p(8);
    for (auto& x : v) x = n(rng);
    for (auto& x : p) x = base + unit(rng) * 0.01;  // spread at most the gap
    for (auto kind : {LossKind::linear_rank, LossKind::quadratic_rank}) {
      double loss = -1;
      const auto g = backprop_grads(v, p, {kind, 0.3, 0.01}, losses::Reduction::mean, &loss);
      zero_ok = zero_ok && loss == 0.0 && std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
    }
  }
  std::uniform_int_distribution<int> level(0, 8);
  std::size_t batches = 0, mismatches = 0;
  for (std::size_t len = 0; len <= 8; ++len) {
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> v(len), p(len);
      for (std::size_t i = 0; i < len; ++i) {
        p[i] = level(rng) * 0.01;  // coarse levels: ties and differences at the gap
        v[i] = n(rng);
      }
      std::multiset<std::pair<std::size_t, std::size_t>> expected, got;
      for (std::size_t a = 0; a < len; ++a)
        for (std::size_t b = 0; b < len; ++b)
          if (a != b && p[a] - p[b] > 0.01) expected.insert({a, b});
      for (const auto& q : losses::filter_pairs(v, p, 0.01)) got.insert({q.i, q.j});
      ++batches;
      mismatches += got != expected;
    }
  }
  return {zero_ok && mismatches == 0,
          std::string(zero_ok ? "zero loss and gradient inside the gap; " : "NONZERO loss or gradient inside the gap; ") +
              std::to_string(mismatches) + " pair-set mismatches in " + std::to_string(batches) +
              " batches of size 0..8"};
}

// 8 ---------------------------------------------------------------------------
std::vector<long double> counting_ranks(const std::vector<double>& x) {
  std::vector<long double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    long double less = 0, equal = 0;
    for (double y : x) {
      less += y < x[i];
      equal += y == x[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

long double reference_pearson(const std::vector<long double>& x, const std::vector<long double>& y) {
  long double mx = 0, my = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

Verdict rank_metrics() {
  Rng rng(mix_seed(8, "acceptance"));
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> len(2, 50), coarse(0, 5);
  double worst = 0.0;
  int compared = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto size = static_cast<std::size_t>(len(rng));
    const bool ties = trial % 2 == 0;
    std::vector<double> x(size), y(size);
    for (std::size_t i = 0; i < size; ++i) {
      x[i] = ties ? coarse(rng) : n(rng);
      y[i] = (ties ? coarse(rng) : n(rng)) + 0.5 * x[i];
    }
    auto constant = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
    };
    if (constant(x) || constant(y)) continue;
    ++compared;
    const std::vector<long double> lx(x.begin(), x.end()), ly(y.begin(), y.end());
    worst = std::max(worst, std::abs(eval::spearman(x, y) -
                                     static_cast<double>(reference_pearson(counting_ranks(x), counting_ranks(y)))));
    worst = std::max(worst, std::abs(eval::pearson(x, y) - static_cast<double>(reference_pearson(lx, ly))));
  }
  const double example = eval::spearman(std::vector<double>{1, 2, 3, 4, 5}, std::vector<double>{1, 3, 2, 5, 4});
  return {worst <= 1e-12 && example == 0.8,
          "max error " + fmt(worst) + " over " + std::to_string(compared) +
              " vector pairs; worked example = " + fmt(example, 17)};
}

// 6, 7, 9, 10 share the desk benchmark --------------------------------------

struct Desk {
  config::RunConfig cfg;
  std::vector<tasks::TaskDataset> tasks;
  eval::EvalReport report;
  std::string csv_first, csv_second;
  std::size_t child_trainings = 0;
  double minutes_first = 0.0;
};

Verdict table1(const Desk& d) {
  int wins = 0;
  std::ostringstream detail;
  for (const auto& t : d.tasks) {
    const auto& l2 = d.report.row(t.task_id, LossKind::l2);
    const auto& lin = d.report.row(t.task_id, LossKind::linear_rank);
    const bool win = l2.spearman && lin.spearman && lin.spearman->mean > l2.spearman->mean;
    wins += win;
    detail << t.task_id << " " << (lin.spearman ? fmt(lin.spearman->mean, 3) : "n/a") << " vs "
           << (l2.spearman ? fmt(l2.spearman->mean, 3) : "n/a") << "; ";
  }
  return {wins >= 5, std::to_string(wins) + "/6 tasks linear > l2 (" + detail.str() + "run " +
                         fmt(d.minutes_first, 3) + " min)"};
}

Verdict table2(const Desk& d) {
  const child::AnalyticBackend backend(d.cfg.arch, d.tasks, d.cfg.analytic_params());
  int hits = 0;
  std::ostringstream detail;
  for (const auto& t : d.tasks) {
    // Brute-force oracle: 95th percentile of the noiseless surrogate over
    // 10,000 random encodings.
    Rng rng(mix_seed(d.cfg.seed, "monte-carlo:" + t.task_id));
    std::vector<double> values(10000);
    for (double& v : values) v = backend.expected_perf(child::random_encoding(d.cfg.arch, rng), t.task_id);
    std::sort(values.begin(), values.end());
    const double threshold = values[static_cast<std::size_t>(0.95 * values.size())];
    const auto& row = d.report.row(t.task_id, LossKind::linear_rank);
    const double found = row.search_performance ? row.search_performance->mean : -1.0;
    const double pct = static_cast<double>(std::lower_bound(values.begin(), values.end(), found) - values.begin()) /
                       static_cast<double>(values.size());
    hits += found >= threshold;
    detail << t.task_id << " pct " << fmt(pct, 3) << "; ";
  }
  // The whole benchmark, search included, must not have trained any child.
  const bool no_training = d.child_trainings == 0;
  return {hits >= 4 && no_training,
          std::to_string(hits) + "/6 tasks in the top 5% (" + detail.str() + std::to_string(d.child_trainings) +
              " child trainings during search)"};
}

Verdict determinism(const Desk& d) {
  const bool same = !d.csv_first.empty() && d.csv_first == d.csv_second;
  return {same, same ? "report.csv byte-identical across two runs (" + std::to_string(d.csv_first.size()) + " bytes)"
                     : "report.csv differs between runs"};
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

Verdict stability(const Desk& d) {
  // A linear-rank ranker trained with the desk settings, first task held out.
  const auto db = expdb::load(d.cfg.out_dir + "/db.jsonl", d.cfg.arch);
  std::vector<tasks::TaskDataset> train(d.tasks.begin() + 1, d.tasks.end());
  auto tcfg = d.cfg.train_config();
  tcfg.seed = mix_seed(d.cfg.seed, "stability");
  const auto w = trainer::train_ranker(db.without(d.tasks[0].task_id), train, tcfg);

  std::vector<std::vector<std::vector<double>>> zs;
  std::vector<std::vector<double>> centroids;
  for (const auto& t : train) {
    Rng rng(mix_seed(d.cfg.seed, "stability:" + t.task_id));
    auto& batches = zs.emplace_back();
    for (int b = 0; b < 10; ++b) batches.push_back(ranker::task_meta_features(w, t, d.cfg.meta_batch, rng));
    std::vector<double> c(batches[0].size(), 0.0);
    for (const auto& z : batches)
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += z[i] / 10.0;
    centroids.push_back(c);
  }
  double between = 0.0;
  int n_between = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      between += distance(centroids[a], centroids[b]);
      ++n_between;
    }
  between /= n_between;
  int ok = 0;
  double worst_ratio = 0.0;
  for (const auto& batches : zs) {
    double within = 0.0;
    int n = 0;
    for (std::size_t a = 0; a < batches.size(); ++a)
      for (std::size_t b = a + 1; b < batches.size(); ++b) {
        within += distance(batches[a], batches[b]);
        ++n;
      }
    within /= n;
    ok += within < between;
    worst_ratio = std::max(worst_ratio, within / between);
  }
  return {ok == static_cast<int>(train.size()),
          std::to_string(ok) + "/" + std::to_string(train.size()) +
              " training tasks with within-task dispersion below the mean between-centroid distance " +
              fmt(between) + " (worst ratio " + fmt(worst_ratio, 3) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string work = argc > 1 ? argv[1] : "acceptance_work";
  std::filesystem::create_directories(work);
  int failures = 0;
  auto report = [&](int id, const std::function<Verdict()>& run) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << "criterion " << std::setw(2) << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail
              << std::endl;
  };

  report(1, loss_exactness);
  report(2, gradient_oracle);
  report(3, finite_differences);
  report(4, deep_set_invariance);
  report(5, gap_filtering);
  report(8, rank_metrics);

  Desk desk;
  std::string desk_error;
  try {
    desk.cfg = config::load(std::string(ARCHRANK_CONFIG_DIR) + "/desk.cfg");
    desk.cfg.out_dir = work + "/desk_run1";
    desk.tasks = tasks::generate_tasks(desk.cfg.task_family());
    const auto before = child::child_trainings_started();
    const auto t0 = std::chrono::steady_clock::now();
    pipeline::cmd_eval_loo(desk.cfg, desk.cfg.out_dir, &desk.report);
    desk.minutes_first = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    desk.child_trainings = child::child_trainings_started() - before;
    desk.csv_first = pipeline::read_file(desk.cfg.out_dir + "/report.csv");
    std::cout << pipeline::read_file(desk.cfg.out_dir + "/report.txt") << std::flush;
  } catch (const std::exception& e) {
    desk_error = e.what();
  }
  auto needs_desk = [&](const std::function<Verdict()>& f) {
    return [&, f] { return desk_error.empty() ? f() : Verdict{false, "desk benchmark failed: " + desk_error}; };
  };
  report(6, needs_desk([&] { return table1(desk); }));
  report(7, needs_desk([&] { return table2(desk); }));
  report(9, needs_desk([&] {
    auto again = desk.cfg;
    pipeline::cmd_eval_loo(again, work + "/desk_run2");
    desk.csv_second = pipeline::read_file(work + "/desk_run2/report.csv");
    return determinism(desk);
  }));
  report(10, needs_desk([&] { return stability(desk); }));

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
