#pragma once

#include <memory>
#include <string>
#include <vector>

#include "archrank/child.hpp"
#include "archrank/config.hpp"
#include "archrank/eval.hpp"
#include "archrank/expdb.hpp"
#include "archrank/ranker.hpp"
#include "archrank/search.hpp"
#include "archrank/tasks.hpp"

// Command implementations behind the archrank CLI. Each reads only its
// explicit inputs and writes only its explicit outputs.
namespace archrank::pipeline {

std::unique_ptr<child::PerfBackend> make_backend(const config::RunConfig& cfg,
                                                 const std::vector<tasks::TaskDataset>& tasks);

void cmd_gen_tasks(const config::RunConfig& cfg, const std::string& out_path);

void cmd_populate_db(const config::RunConfig& cfg, const std::string& tasks_path,
                     const std::string& out_path);

// Trains on every task of the db except `test_task_id`. Optional metrics CSV.
void cmd_train(const config::RunConfig& cfg, const std::string& tasks_path,
               const std::string& db_path, const std::string& test_task_id,
               const std::string& out_weights, const std::string& metrics_path = "");

// Returns the SearchResult JSON for the held-out task.
std::string cmd_search(const config::RunConfig& cfg, const std::string& tasks_path,
                       const std::string& db_path, const std::string& weights_path,
                       const std::string& test_task_id);

struct LooOutputs {
  std::string report_csv;
  std::string report_txt;
  std::string tasks_path;
  std::string db_path;
};

// Generates tasks, populates the db, runs leave-one-out, writes
// tasks.jsonl, db.jsonl, report.csv and report.txt under `out_dir`.
LooOutputs cmd_eval_loo(const config::RunConfig& cfg, const std::string& out_dir,
                        eval::EvalReport* report_out = nullptr);

// Renders a report CSV as aligned tables.
std::string cmd_report(const std::string& report_path);

// PCA projection of meta-features, CSV.
void cmd_pca(const config::RunConfig& cfg, const std::string& tasks_path,
             const std::string& weights_path, const std::string& out_path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace archrank::pipeline
