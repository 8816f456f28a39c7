#include "archrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "archrank/eigen_view.hpp"
#include "archrank/error.hpp"

namespace archrank::eval {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "correlation: length mismatch");
  require(x.size() >= 2, "correlation needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelation("correlation of a constant vector");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "correlation: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

std::optional<Summary> summarize(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  Summary s;
  s.count = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

const EvalRow& EvalReport::row(const std::string& task_id, losses::LossKind loss) const {
  for (const auto& r : rows) {
    if (r.task_id == task_id && r.loss == loss) return r;
  }
  throw ContractViolation("report has no row for task '" + task_id + "' and loss '" +
                          std::string(losses::to_string(loss)) + "'");
}

Correlations correlate(std::span<const double> predicted, std::span<const double> recorded) {
  Correlations c;
  try {
    c.spearman = spearman(predicted, recorded);
  } catch (const UndefinedCorrelation&) {
  }
  try {
    c.pearson = pearson(predicted, recorded);
  } catch (const UndefinedCorrelation&) {
  }
  return c;
}

namespace {

CellResult run_cell(const std::vector<tasks::TaskDataset>& all_tasks, const expdb::ExperimentDB& db,
                    const child::PerfBackend& backend, const LooConfig& cfg,
                    const tasks::TaskDataset& held_out, const losses::LossConfig& loss, int repeat) {
  CellResult cell;
  cell.task_id = held_out.task_id;
  cell.loss = loss.kind;
  cell.repeat = repeat;

  std::vector<tasks::TaskDataset> training;
  for (const auto& t : all_tasks) {
    if (t.task_id != held_out.task_id) training.push_back(t);
  }
  const expdb::ExperimentDB train_db = db.without(held_out.task_id);
  // Data-leak guard.
  require(!train_db.contains(held_out.task_id), "held-out task leaked into the training db");
  require(std::none_of(training.begin(), training.end(),
                       [&](const auto& t) { return t.task_id == held_out.task_id; }),
          "held-out task leaked into the training tasks");

  const std::string tag = held_out.task_id + ":" + std::to_string(repeat);
  trainer::TrainConfig tc = cfg.train;
  tc.loss = loss;
  tc.seed = mix_seed(cfg.seed, "train:" + tag);
  trainer::StepObserver observer;
  if (cfg.on_train_step) {
    observer = [&](const trainer::StepMetrics& m) { cfg.on_train_step(held_out.task_id, m); };
  }
  ranker::RankerWeights weights;
  try {
    weights = trainer::train_ranker(train_db, training, tc, observer);
  } catch (const std::exception& e) {
    cell.errors.push_back(std::string("train: ") + e.what());
    return cell;
  }

  try {
    const auto& recs = db.records(held_out.task_id);
    num::Matrix enc(recs.size(), weights.encoding_dim);
    std::vector<double> recorded(recs.size());
    for (std::size_t r = 0; r < recs.size(); ++r) {
      std::copy(recs[r].encoding.begin(), recs[r].encoding.end(), enc.row_span(r).begin());
      recorded[r] = recs[r].performance;
    }
    const auto z = ranker::task_centroid(weights, held_out, cfg.eval_meta, mix_seed(cfg.seed, "z:" + tag));
    const auto predicted = ranker::score_batch(weights, enc, z);
    const auto c = correlate(predicted, recorded);
    cell.spearman = c.spearman;
    cell.pearson = c.pearson;
    if (!c.spearman) cell.errors.emplace_back("spearman undefined");
  } catch (const std::exception& e) {
    cell.errors.push_back(std::string("correlation: ") + e.what());
  }

  try {
    const auto result = search::search(weights, train_db, training, held_out, cfg.search,
                                       mix_seed(cfg.seed, "search:" + tag));
    cell.found_encoding = result.best_encoding;
    cell.search_performance =
        backend.evaluate_found(result.best_encoding, held_out, mix_seed(cfg.seed, "found:" + tag));
  } catch (const std::exception& e) {
    cell.errors.push_back(std::string("search: ") + e.what());
  }
  return cell;
}

}  // namespace

EvalReport leave_one_out(const std::vector<tasks::TaskDataset>& all_tasks,
                         const expdb::ExperimentDB& db, const child::PerfBackend& backend,
                         const LooConfig& cfg) {
  require(all_tasks.size() >= 3, "leave-one-out needs at least 3 tasks");
  require(!cfg.losses.empty(), "leave-one-out needs at least one loss");
  require(cfg.n_repeats >= 1, "leave-one-out needs at least one repeat");
  std::vector<const tasks::TaskDataset*> ordered;
  for (const auto& t : all_tasks) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->task_id < b->task_id; });

  struct Job {
    const tasks::TaskDataset* task;
    std::size_t loss;
    int repeat;
  };
  std::vector<Job> jobs;
  for (const auto* t : ordered) {
    for (std::size_t l = 0; l < cfg.losses.size(); ++l) {
      for (int r = 0; r < cfg.n_repeats; ++r) jobs.push_back({t, l, r});
    }
  }
  std::vector<CellResult> cells(jobs.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < jobs.size(); i += stride) {
      cells[i] = run_cell(all_tasks, db, backend, cfg, *jobs[i].task, cfg.losses[jobs[i].loss],
                          jobs[i].repeat);
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, cfg.jobs));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
  }

  EvalReport report;
  for (const auto* t : ordered) {
    for (const auto& loss : cfg.losses) {
      EvalRow row;
      row.task_id = t->task_id;
      row.loss = loss.kind;
      row.n_repeats = cfg.n_repeats;
      std::vector<double> sp, pe, perf;
      for (const auto& c : cells) {
        if (c.task_id != t->task_id || c.loss != loss.kind) continue;
        if (c.spearman) sp.push_back(*c.spearman);
        if (c.pearson) pe.push_back(*c.pearson);
        if (c.search_performance) perf.push_back(*c.search_performance);
        if (!c.errors.empty()) ++row.n_failed;
      }
      row.spearman = summarize(sp);
      row.pearson = summarize(pe);
      row.search_performance = summarize(perf);
      report.rows.push_back(std::move(row));
    }
  }
  report.cells = std::move(cells);
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string summary_fields(const std::optional<Summary>& s) {
  return s ? fmt(s->mean) + "," + fmt(s->std) : std::string(",");
}

std::string summary_cell(const std::optional<Summary>& s) {
  if (!s) return "missing";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s->mean, s->std);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "task_id,loss,spearman_mean,spearman_std,pearson_mean,pearson_std,"
        "search_perf_mean,search_perf_std,n_repeats,n_failed\n";
  for (const auto& r : report.rows) {
    os << r.task_id << ',' << losses::to_string(r.loss) << ',' << summary_fields(r.spearman) << ','
       << summary_fields(r.pearson) << ',' << summary_fields(r.search_performance) << ','
       << r.n_repeats << ',' << r.n_failed << '\n';
  }
  return os.str();
}

EvalReport report_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line.rfind("task_id,loss,", 0) == 0,
          "report CSV is missing its header");
  EvalReport report;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    require(f.size() == 10, "report CSV line " + std::to_string(line_no) + " has " +
                                std::to_string(f.size()) + " fields");
    EvalRow row;
    row.task_id = f[0];
    row.loss = losses::loss_kind_from_string(f[1]);
    row.n_repeats = std::stoi(f[8]);
    row.n_failed = std::stoi(f[9]);
    auto parse = [&](std::size_t k) -> std::optional<Summary> {
      if (f[k].empty()) return std::nullopt;
      return Summary{std::stod(f[k]), std::stod(f[k + 1]), row.n_repeats - row.n_failed};
    };
    row.spearman = parse(2);
    row.pearson = parse(4);
    row.search_performance = parse(6);
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string report_table(const EvalReport& report) {
  std::vector<std::string> task_ids;
  std::vector<losses::LossKind> kinds;
  for (const auto& r : report.rows) {
    if (std::find(task_ids.begin(), task_ids.end(), r.task_id) == task_ids.end()) task_ids.push_back(r.task_id);
    if (std::find(kinds.begin(), kinds.end(), r.loss) == kinds.end()) kinds.push_back(r.loss);
  }
  auto section = [&](const std::string& title, auto metric) {
    std::vector<std::vector<std::string>> grid;
    std::vector<std::string> header{"task"};
    for (auto k : kinds) header.emplace_back(losses::to_string(k));
    grid.push_back(header);
    for (const auto& id : task_ids) {
      std::vector<std::string> line{id};
      for (auto k : kinds) {
        const EvalRow* found = nullptr;
        for (const auto& r : report.rows) {
          if (r.task_id == id && r.loss == k) found = &r;
        }
        line.push_back(found ? summary_cell(metric(*found)) : "-");
      }
      grid.push_back(line);
    }
    // Width in code points; the ± sign is two bytes.
    auto width = [](const std::string& s) {
      std::size_t w = 0;
      for (unsigned char c : s) w += (c & 0xC0) != 0x80;
      return w;
    };
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : grid) {
      for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], width(line[c]));
    }
    std::ostringstream os;
    os << title << " (mean ± std over repeats)\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      for (std::size_t c = 0; c < grid[r].size(); ++c) {
        os << (c ? "  " : "") << grid[r][c] << std::string(widths[c] - width(grid[r][c]), ' ');
      }
      os << '\n';
      if (r == 0) {
        std::size_t total = 0;
        for (auto w : widths) total += w;
        os << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
      }
    }
    return os.str();
  };
  return section("Spearman rank correlation", [](const EvalRow& r) { return r.spearman; }) + "\n" +
         section("Pearson correlation", [](const EvalRow& r) { return r.pearson; }) + "\n" +
         section("Found-architecture performance",
                 [](const EvalRow& r) { return r.search_performance; });
}

std::vector<std::array<double, 2>> pca_project(const std::vector<std::vector<double>>& vectors,
                                               double* variance_pc1, double* variance_pc2) {
  require(vectors.size() >= 2, "PCA needs at least two vectors");
  const std::size_t n = vectors.size();
  const std::size_t d = vectors.front().size();
  num::RowMajor x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    require(vectors[i].size() == d, "PCA vectors differ in length");
    for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = vectors[i][j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues ascend; take the last two, clamping round-off below zero.
  const Eigen::Index k = eig.eigenvalues().size();
  std::array<double, 2> var{0.0, 0.0};
  std::array<Eigen::VectorXd, 2> axes{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)),
                                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d))};
  for (int c = 0; c < 2 && c < k; ++c) {
    const double lambda = eig.eigenvalues()(k - 1 - c);
    if (lambda > 1e-12 * std::max(1.0, eig.eigenvalues()(k - 1))) {
      var[static_cast<std::size_t>(c)] = lambda;
      axes[static_cast<std::size_t>(c)] = eig.eigenvectors().col(k - 1 - c);
    }
  }
  if (variance_pc1) *variance_pc1 = var[0];
  if (variance_pc2) *variance_pc2 = var[1];
  std::vector<std::array<double, 2>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = x.row(static_cast<Eigen::Index>(i));
    out[i] = {row.dot(axes[0].transpose()), row.dot(axes[1].transpose())};
  }
  return out;
}

PcaResult pca_meta_features(const ranker::RankerWeights& weights,
                            const std::vector<tasks::TaskDataset>& tasks, std::size_t n_batches,
                            std::size_t batch_size, std::uint64_t seed) {
  std::vector<std::vector<double>> zs;
  PcaResult result;
  for (const auto& t : tasks) {
    Rng rng(mix_seed(seed, "pca:" + t.task_id));
    for (std::size_t b = 0; b < n_batches; ++b) {
      zs.push_back(ranker::task_meta_features(weights, t, batch_size, rng));
      result.points.push_back({t.task_id, static_cast<int>(b), 0.0, 0.0});
    }
  }
  const auto proj = pca_project(zs, &result.variance_pc1, &result.variance_pc2);
  for (std::size_t i = 0; i < proj.size(); ++i) {
    result.points[i].pc1 = proj[i][0];
    result.points[i].pc2 = proj[i][1];
  }
  return result;
}

std::string pca_csv(const PcaResult& result) {
  std::ostringstream os;
  os << "task_id,batch,pc1,pc2\n";
  for (const auto& p : result.points) {
    os << p.task_id << ',' << p.batch << ',' << fmt(p.pc1) << ',' << fmt(p.pc2) << '\n';
  }
  return os.str();
}

}  // namespace archrank::eval
