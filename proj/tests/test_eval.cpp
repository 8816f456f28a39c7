#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>
#include <set>

#include "archrank/eval.hpp"

using namespace archrank;
using losses::LossKind;

namespace {

// Brute-force references: ranks by counting, Pearson by two passes in long
// double.
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
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<long double> widen(const std::vector<double>& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_CASE("rank correlation worked examples") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(eval::spearman(x, std::vector<double>{1, 3, 2, 5, 4}) == 0.8);
  CHECK(eval::spearman(x, std::vector<double>{2, 4, 8, 16, 32}) == 1.0);
  CHECK(eval::spearman(x, std::vector<double>{5, 4, 3, 2, 1}) == -1.0);
  CHECK(eval::pearson(x, std::vector<double>{3, 5, 7, 9, 11}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(eval::pearson(x, std::vector<double>{-1, -2, -3, -4, -5}) == doctest::Approx(-1.0).epsilon(1e-15));
  // cov = 3/2, var x = 1, var y = 7/3 (population), so r = 1.5 / sqrt(7/3).
  const double r = eval::pearson(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 3});
  CHECK(std::abs(r - 1.5 / std::sqrt(7.0 / 3.0)) < 1e-15);
  CHECK(std::abs(r - 0.98198050606) < 1e-10);
}

TEST_CASE("average ranks for ties") {
  const auto r = eval::average_ranks(std::vector<double>{10, 20, 10, 30, 20, 10});
  CHECK(r == std::vector<double>{2, 4.5, 2, 6, 4.5, 2});
}

TEST_CASE("undefined correlations are flagged") {
  const std::vector<double> flat{1, 1, 1}, x{1, 2, 3};
  CHECK_THROWS_AS(eval::spearman(flat, x), eval::UndefinedCorrelation);
  CHECK_THROWS_AS(eval::pearson(x, flat), eval::UndefinedCorrelation);
  CHECK_THROWS(eval::pearson(std::vector<double>{1}, std::vector<double>{2}));
  CHECK_THROWS(eval::pearson(x, std::vector<double>{1, 2}));
  const auto c = eval::correlate(x, flat);
  CHECK_FALSE(c.spearman.has_value());
  CHECK_FALSE(c.pearson.has_value());
}

TEST_CASE("correlations match brute-force references on random vectors") {
  Rng rng(1);
  std::normal_distribution<double> n;
  std::uniform_int_distribution<int> len(2, 40), coarse(0, 4);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto size = static_cast<std::size_t>(len(rng));
    const bool ties = trial % 2 == 0;
    std::vector<double> x(size), y(size);
    for (std::size_t i = 0; i < size; ++i) {
      x[i] = ties ? coarse(rng) : n(rng);
      y[i] = ties ? coarse(rng) + 0.5 * x[i] : n(rng) + 0.5 * x[i];
    }
    const bool degenerate = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                            std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (degenerate) {
      CHECK_THROWS_AS(eval::spearman(x, y), eval::UndefinedCorrelation);
      continue;
    }
    ++checked;
    const auto ref_s = reference_pearson(counting_ranks(x), counting_ranks(y));
    const auto ref_p = reference_pearson(widen(x), widen(y));
    CHECK(std::abs(eval::spearman(x, y) - static_cast<double>(ref_s)) <= 1e-12);
    CHECK(std::abs(eval::pearson(x, y) - static_cast<double>(ref_p)) <= 1e-12);
  }
  CHECK(checked > 950);
}

TEST_CASE("invariances") {
  Rng rng(2);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(15), y(15);
    for (auto& v : x) v = n(rng);
    for (auto& v : y) v = n(rng) + x[&v - y.data()];
    auto mono = x, affine = x;
    for (auto& v : mono) v = std::exp(v) + v * v * v;
    const double a = 0.1 + std::abs(n(rng)) * 3, b = n(rng) * 10;
    for (auto& v : affine) v = a * v + b;
    CHECK(eval::spearman(mono, y) == eval::spearman(x, y));
    CHECK(std::abs(eval::pearson(affine, y) - eval::pearson(x, y)) < 1e-12);
    const double s = eval::spearman(x, y), p = eval::pearson(x, y);
    CHECK(s >= -1.0);
    CHECK(s <= 1.0);
    CHECK(p >= -1.0);
    CHECK(p <= 1.0);
  }
}

TEST_CASE("summaries use the n-1 denominator") {
  const auto s = eval::summarize(std::vector<double>{1, 2, 3, 4});
  REQUIRE(s.has_value());
  CHECK(s->mean == 2.5);
  CHECK(std::abs(s->std - std::sqrt(5.0 / 3.0)) < 1e-15);
  CHECK(s->count == 4);
  CHECK(eval::summarize(std::vector<double>{7})->std == 0.0);
  CHECK_FALSE(eval::summarize(std::vector<double>{}).has_value());
}

TEST_CASE("leave-one-out") {
  tasks::TaskFamilyConfig tcfg;
  tcfg.num_tasks = 3;
  tcfg.min_samples = 200;
  tcfg.max_samples = 300;
  tcfg.seed = 41;
  const auto ts = tasks::generate_tasks(tcfg);
  const child::AnalyticBackend backend(child::ArchSpace::desk(), ts, child::AnalyticParams{});
  const auto db = expdb::populate(ts, child::ArchSpace::desk(), backend, {40, 2, 1});

  eval::LooConfig cfg;
  cfg.losses = {{LossKind::l2, 0.3, 0.01}, {LossKind::linear_rank, 0.3, 0.01}};
  cfg.n_repeats = 1;
  cfg.train.steps = 30;
  cfg.train.sample_batch = 32;
  cfg.search.max_iters = 20;
  cfg.search.meta = {32, 2};
  cfg.eval_meta = {32, 2};
  cfg.seed = 5;
  std::mutex mu;
  std::set<std::pair<std::string, std::string>> seen;  // (held out, trained on)
  cfg.on_train_step = [&](const std::string& held_out, const trainer::StepMetrics& m) {
    std::lock_guard lock(mu);
    seen.insert({held_out, m.task_id});
  };

  const auto report = eval::leave_one_out(ts, db, backend, cfg);
  SUBCASE("one row per task and loss, ordered by task id") {
    REQUIRE(report.rows.size() == 6);
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) CHECK(report.rows[i].task_id <= report.rows[i + 1].task_id);
    for (const auto& row : report.rows) {
      CHECK(row.n_repeats == 1);
      CHECK(row.n_failed == 0);
      REQUIRE(row.spearman.has_value());
      CHECK(std::abs(row.spearman->mean) <= 1.0);
      REQUIRE(row.search_performance.has_value());
      CHECK(row.search_performance->mean >= 0.0);
    }
    CHECK(report.cells.size() == 6);
  }
  SUBCASE("held-out tasks never reach the trainer") {
    REQUIRE_FALSE(seen.empty());
    for (const auto& [held, trained] : seen) CHECK(held != trained);
    std::set<std::string> helds;
    for (const auto& [held, trained] : seen) helds.insert(held);
    CHECK(helds.size() == 3);
  }
  SUBCASE("job count does not change the result") {
    auto parallel = cfg;
    parallel.jobs = 3;
    parallel.on_train_step = nullptr;
    CHECK(eval::report_csv(eval::leave_one_out(ts, db, backend, parallel)) == eval::report_csv(report));
  }
  SUBCASE("csv round trip and table rendering") {
    const auto csv = eval::report_csv(report);
    CHECK(csv.rfind("task_id,loss,spearman_mean", 0) == 0);
    CHECK(eval::report_csv(eval::report_from_csv(csv)) == csv);
    const auto table = eval::report_table(report);
    CHECK(table.find("±") != std::string::npos);
    CHECK(table.find(ts[0].task_id) != std::string::npos);
  }
  SUBCASE("an oracle predictor has perfect rank correlation on every task") {
    for (const auto& t : ts) {
      std::vector<double> p;
      for (const auto& r : db.records(t.task_id)) p.push_back(r.performance);
      CHECK(eval::correlate(p, p).spearman.value() == 1.0);
    }
  }
  SUBCASE("too few tasks") {
    const std::vector<tasks::TaskDataset> two{ts[0], ts[1]};
    CHECK_THROWS(eval::leave_one_out(two, db, backend, cfg));
  }
}

TEST_CASE("pca") {
  SUBCASE("identical vectors project to the origin") {
    const std::vector<std::vector<double>> v(6, std::vector<double>(50, 0.7));
    for (const auto& p : eval::pca_project(v)) {
      CHECK(p[0] == 0.0);
      CHECK(p[1] == 0.0);
    }
  }
  SUBCASE("collinear vectors have no second component") {
    std::vector<std::vector<double>> v;
    for (int k = 0; k < 8; ++k) {
      std::vector<double> x(50);
      for (std::size_t i = 0; i < 50; ++i) x[i] = 1.0 + k * (0.1 * static_cast<double>(i) - 2.0);
      v.push_back(x);
    }
    double v1 = -1, v2 = -1;
    const auto pts = eval::pca_project(v, &v1, &v2);
    CHECK(v1 > 0.0);
    CHECK(std::abs(v2) < 1e-9);
    for (const auto& p : pts) CHECK(std::abs(p[1]) < 1e-6);
  }
  SUBCASE("variances are ordered, nonnegative and match the covariance spectrum") {
    Rng rng(3);
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> v(60, std::vector<double>(50));
    for (auto& x : v)
      for (std::size_t i = 0; i < 50; ++i) x[i] = n(rng) * (i < 2 ? 5.0 - 2.0 * i : 0.5);
    double v1 = 0, v2 = 0;
    const auto pts = eval::pca_project(v, &v1, &v2);
    CHECK(v1 >= v2);
    CHECK(v2 >= 0.0);
    // The projected coordinates carry exactly the reported variances.
    double s1 = 0, s2 = 0;
    for (const auto& p : pts) {
      s1 += p[0] * p[0];
      s2 += p[1] * p[1];
    }
    CHECK(std::abs(s1 / (pts.size() - 1) - v1) < 1e-9 * v1);
    CHECK(std::abs(s2 / (pts.size() - 1) - v2) < 1e-9 * v1);
    // Power iteration oracle for the top eigenvalue.
    std::vector<double> mean(50, 0.0);
    for (const auto& x : v)
      for (std::size_t i = 0; i < 50; ++i) mean[i] += x[i] / v.size();
    std::vector<double> b(50, 1.0);
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
      std::vector<double> nb(50, 0.0);
      for (const auto& x : v) {
        double d = 0;
        for (std::size_t i = 0; i < 50; ++i) d += (x[i] - mean[i]) * b[i];
        for (std::size_t i = 0; i < 50; ++i) nb[i] += (x[i] - mean[i]) * d / (v.size() - 1);
      }
      double norm = 0;
      for (double y : nb) norm += y * y;
      lambda = std::sqrt(norm);
      for (std::size_t i = 0; i < 50; ++i) b[i] = nb[i] / lambda;
    }
    CHECK(std::abs(lambda - v1) < 1e-8 * v1);
  }
  SUBCASE("meta-feature export") {
    tasks::TaskFamilyConfig tcfg;
    tcfg.num_tasks = 3;
    tcfg.min_samples = 100;
    tcfg.max_samples = 120;
    const auto ts = tasks::generate_tasks(tcfg);
    const auto w = ranker::RankerWeights::init(8, 21, 1, 0.3);
    const auto r = eval::pca_meta_features(w, ts, 10, 32, 4);
    CHECK(r.points.size() == 30);
    CHECK(r.variance_pc1 >= r.variance_pc2);
    const auto csv = eval::pca_csv(r);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 31);
  }
}
