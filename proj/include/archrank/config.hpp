#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "archrank/child.hpp"
#include "archrank/eval.hpp"
#include "archrank/losses.hpp"
#include "archrank/search.hpp"
#include "archrank/tasks.hpp"
#include "archrank/trainer.hpp"

namespace archrank::config {

enum class BackendKind { analytic, real_train };

std::string_view to_string(BackendKind kind);
BackendKind backend_from_string(std::string_view name);

// Every tunable of the pipeline under namespaced keys (tasks.*, arch.*, db.*,
// ranker.*, loss.*, opt.*, search.*, eval.*). Defaults are the desk preset.
struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;

  tasks::TaskFamilyConfig tasks;
  child::ArchSpace arch = child::ArchSpace::desk();

  int records_per_task = 300;
  BackendKind backend = BackendKind::analytic;
  child::AnalyticParams analytic{3.0, 0.01, 1.5, 1.0, 0};
  child::TrainChildConfig child;

  double init_scale = 0.05;
  std::size_t meta_batch = 256;
  std::size_t meta_batches = 10;

  losses::LossConfig loss;
  double learning_rate = 1e-4;
  double momentum = 0.5;
  int steps = 20000;
  std::size_t record_batch = 32;

  search::SearchConfig search;

  int n_repeats = 10;
  std::vector<losses::LossKind> eval_losses{losses::LossKind::l2, losses::LossKind::linear_rank,
                                            losses::LossKind::quadratic_rank};

  std::string out_dir = ".";

  // Derived per-component settings; every seed descends from `seed`.
  tasks::TaskFamilyConfig task_family() const;
  child::AnalyticParams analytic_params() const;
  std::uint64_t feature_seed() const;
  expdb::PopulateOptions populate_options() const;
  trainer::TrainConfig train_config() const;
  search::SearchConfig search_config() const;
  eval::LooConfig loo_config() const;
};

// Sets one key from its text value; throws ContractViolation on an unknown
// key or a malformed value.
void set_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Applies key/value pairs, collecting every offending key into one error.
void apply_entries(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& entries);

// "key = value" lines; '#' comments; "[section]" prefixes later keys.
std::vector<std::pair<std::string, std::string>> parse_entries(std::istream& in);
RunConfig load(const std::string& path);
RunConfig parse(const std::string& text);

// Cross-field validation; lists every problem.
void validate(const RunConfig& cfg);

// All keys with their current values, in canonical order.
std::vector<std::pair<std::string, std::string>> dump(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace archrank::config
