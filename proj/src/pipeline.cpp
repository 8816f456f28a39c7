#include "archrank/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "archrank/error.hpp"
#include "archrank/trainer.hpp"

namespace archrank::pipeline {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw Error("failed writing '" + path + "'");
}

std::unique_ptr<child::PerfBackend> make_backend(const config::RunConfig& cfg,
                                                 const std::vector<tasks::TaskDataset>& tasks) {
  if (cfg.backend == config::BackendKind::analytic) {
    return std::make_unique<child::AnalyticBackend>(cfg.arch, tasks, cfg.analytic_params());
  }
  require(!tasks.empty(), "real-train backend needs at least one task");
  return std::make_unique<child::RealTrainBackend>(cfg.arch, tasks.front().input_dim(), cfg.child,
                                                   cfg.feature_seed());
}

void cmd_gen_tasks(const config::RunConfig& cfg, const std::string& out_path) {
  config::validate(cfg);
  tasks::save_tasks(out_path, tasks::generate_tasks(cfg.task_family()));
}

void cmd_populate_db(const config::RunConfig& cfg, const std::string& tasks_path,
                     const std::string& out_path) {
  config::validate(cfg);
  const auto ts = tasks::load_tasks(tasks_path);
  const auto backend = make_backend(cfg, ts);
  expdb::save(expdb::populate(ts, cfg.arch, *backend, cfg.populate_options()), out_path);
}

namespace {

std::vector<tasks::TaskDataset> training_tasks(const std::vector<tasks::TaskDataset>& all,
                                               const expdb::ExperimentDB& db,
                                               const std::string& test_task_id) {
  tasks::find_task(all, test_task_id);
  std::vector<tasks::TaskDataset> out;
  for (const auto& t : all) {
    if (t.task_id != test_task_id && db.contains(t.task_id)) out.push_back(t);
  }
  return out;
}

}  // namespace

void cmd_train(const config::RunConfig& cfg, const std::string& tasks_path,
               const std::string& db_path, const std::string& test_task_id,
               const std::string& out_weights, const std::string& metrics_path) {
  config::validate(cfg);
  const auto ts = tasks::load_tasks(tasks_path);
  const auto db = expdb::load(db_path, cfg.arch).without(test_task_id);
  const auto training = training_tasks(ts, db, test_task_id);
  ranker::RankerWeights weights;
  if (metrics_path.empty()) {
    weights = trainer::train_ranker(db, training, cfg.train_config());
  } else {
    std::ofstream metrics(metrics_path);
    if (!metrics) throw Error("cannot open '" + metrics_path + "' for writing");
    trainer::MetricsCsv sink(metrics);
    weights = trainer::train_ranker(db, training, cfg.train_config(), std::ref(sink));
  }
  ranker::save_weights(weights, out_weights);
}

std::string cmd_search(const config::RunConfig& cfg, const std::string& tasks_path,
                       const std::string& db_path, const std::string& weights_path,
                       const std::string& test_task_id) {
  config::validate(cfg);
  const auto ts = tasks::load_tasks(tasks_path);
  const auto db = expdb::load(db_path, cfg.arch).without(test_task_id);
  const auto weights = ranker::load_weights(weights_path);
  require(weights.encoding_dim == cfg.arch.encoding_dim(),
          "ranker checkpoint was trained for a different arch space");
  const auto& test = tasks::find_task(ts, test_task_id);
  const auto result = search::search(weights, db, training_tasks(ts, db, test_task_id), test,
                                     cfg.search_config(), mix_seed(cfg.seed, "search"));
  return search::to_json(result);
}

LooOutputs cmd_eval_loo(const config::RunConfig& cfg, const std::string& out_dir,
                        eval::EvalReport* report_out) {
  config::validate(cfg);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  LooOutputs out{(dir / "report.csv").string(), (dir / "report.txt").string(),
                 (dir / "tasks.jsonl").string(), (dir / "db.jsonl").string()};

  const auto ts = tasks::generate_tasks(cfg.task_family());
  tasks::save_tasks(out.tasks_path, ts);
  const auto backend = make_backend(cfg, ts);
  const auto db = expdb::populate(ts, cfg.arch, *backend, cfg.populate_options());
  expdb::save(db, out.db_path);

  auto report = eval::leave_one_out(ts, db, *backend, cfg.loo_config());
  write_file(out.report_csv, eval::report_csv(report));
  write_file(out.report_txt, eval::report_table(report));
  if (report_out) *report_out = std::move(report);
  return out;
}

std::string cmd_report(const std::string& report_path) {
  return eval::report_table(eval::report_from_csv(read_file(report_path)));
}

void cmd_pca(const config::RunConfig& cfg, const std::string& tasks_path,
             const std::string& weights_path, const std::string& out_path) {
  config::validate(cfg);
  const auto ts = tasks::load_tasks(tasks_path);
  const auto weights = ranker::load_weights(weights_path);
  const auto result = eval::pca_meta_features(weights, ts, cfg.meta_batches, cfg.meta_batch,
                                              mix_seed(cfg.seed, "pca"));
  write_file(out_path, eval::pca_csv(result));
}

}  // namespace archrank::pipeline
