// archrank: task-aware architecture ranking pipeline.
//
//   archrank gen-tasks   --config desk.cfg --out tasks.jsonl
//   archrank populate-db --config desk.cfg --tasks tasks.jsonl --out db.jsonl
//   archrank train       --config desk.cfg --tasks tasks.jsonl --db db.jsonl --test-task task0 --out w.json
//   archrank search      --config desk.cfg --tasks tasks.jsonl --db db.jsonl --weights w.json --test-task task0
//   archrank eval-loo    --config desk.cfg --out results/
//   archrank report      --report results/report.csv
//   archrank pca         --config desk.cfg --tasks tasks.jsonl --weights w.json --out pca.csv

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "archrank/config.hpp"
#include "archrank/pipeline.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> loss;
  std::optional<std::string> backend;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Config file (key = value lines)");
  cmd->add_option("--seed", c.seed, "Run seed; determines every stochastic choice");
  cmd->add_option("--jobs", c.jobs, "Worker threads");
  cmd->add_option("--loss", c.loss, "Loss kind")->check(CLI::IsMember({"l2", "linear", "quadratic"}));
  cmd->add_option("--backend", c.backend, "Performance backend")
      ->check(CLI::IsMember({"analytic", "real-train"}));
  cmd->add_option("--set", c.overrides, "Override any config key: --set key=value");
}

archrank::config::RunConfig resolve(const Common& c) {
  archrank::config::RunConfig cfg;
  std::vector<std::pair<std::string, std::string>> entries;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw archrank::Error("cannot open config '" + c.config_path + "'");
    entries = archrank::config::parse_entries(in);
  }
  // Flags win over the file.
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw archrank::ContractViolation("--set expects key=value, got '" + o + "'");
    entries.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  if (c.seed) entries.emplace_back("seed", std::to_string(*c.seed));
  if (c.jobs) entries.emplace_back("jobs", std::to_string(*c.jobs));
  if (c.loss) entries.emplace_back("loss.kind", *c.loss);
  if (c.backend) entries.emplace_back("db.backend", *c.backend);
  archrank::config::apply_entries(cfg, entries);
  archrank::config::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-aware neural architecture ranking and search"};
  app.require_subcommand(1);

  Common common;
  std::string out, tasks_path, db_path, weights_path, test_task, metrics_path, report_path;

  auto* gen = app.add_subcommand("gen-tasks", "Generate synthetic task data sets (JSON-lines)");
  add_common(gen, common);
  gen->add_option("--out", out, "Output tasks file")->required();

  auto* pop = app.add_subcommand("populate-db", "Build the experiment database");
  add_common(pop, common);
  pop->add_option("--tasks", tasks_path, "Tasks file")->required()->check(CLI::ExistingFile);
  pop->add_option("--out", out, "Output database file")->required();

  auto* train = app.add_subcommand("train", "Train one ranker with a held-out task");
  add_common(train, common);
  train->add_option("--tasks", tasks_path, "Tasks file")->required()->check(CLI::ExistingFile);
  train->add_option("--db", db_path, "Experiment database")->required()->check(CLI::ExistingFile);
  train->add_option("--test-task", test_task, "Held-out task id")->required();
  train->add_option("--out", out, "Output weights checkpoint (JSON)")->required();
  train->add_option("--metrics", metrics_path, "Training metrics CSV");

  auto* srch = app.add_subcommand("search", "Gradient-ascent architecture search for a task");
  add_common(srch, common);
  srch->add_option("--tasks", tasks_path, "Tasks file")->required()->check(CLI::ExistingFile);
  srch->add_option("--db", db_path, "Experiment database")->required()->check(CLI::ExistingFile);
  srch->add_option("--weights", weights_path, "Ranker checkpoint")->required()->check(CLI::ExistingFile);
  srch->add_option("--test-task", test_task, "Target task id")->required();
  srch->add_option("--out", out, "Write the result JSON here instead of stdout");

  auto* loo = app.add_subcommand("eval-loo", "Full leave-one-out evaluation");
  add_common(loo, common);
  loo->add_option("--out", out, "Output directory");

  auto* rep = app.add_subcommand("report", "Render a report CSV as tables");
  rep->add_option("--report", report_path, "Report CSV")->required()->check(CLI::ExistingFile);

  auto* pca = app.add_subcommand("pca", "Export PCA of task meta-features (CSV)");
  add_common(pca, common);
  pca->add_option("--tasks", tasks_path, "Tasks file")->required()->check(CLI::ExistingFile);
  pca->add_option("--weights", weights_path, "Ranker checkpoint")->required()->check(CLI::ExistingFile);
  pca->add_option("--out", out, "Output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    namespace p = archrank::pipeline;
    if (*gen) {
      p::cmd_gen_tasks(resolve(common), out);
    } else if (*pop) {
      p::cmd_populate_db(resolve(common), tasks_path, out);
    } else if (*train) {
      p::cmd_train(resolve(common), tasks_path, db_path, test_task, out, metrics_path);
    } else if (*srch) {
      const auto json = p::cmd_search(resolve(common), tasks_path, db_path, weights_path, test_task);
      if (out.empty()) {
        std::cout << json << '\n';
      } else {
        p::write_file(out, json + "\n");
      }
    } else if (*loo) {
      const auto cfg = resolve(common);
      const auto files = p::cmd_eval_loo(cfg, out.empty() ? cfg.out_dir : out);
      std::cout << p::read_file(files.report_txt);
    } else if (*rep) {
      std::cout << p::cmd_report(report_path);
    } else if (*pca) {
      p::cmd_pca(resolve(common), tasks_path, weights_path, out);
    }
  } catch (const std::exception& e) {
    std::cerr << "archrank: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
