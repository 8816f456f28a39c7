#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "archrank/child.hpp"
#include "archrank/random.hpp"
#include "archrank/tasks.hpp"

namespace archrank::expdb {

// One trained (or surrogate-evaluated) child architecture on one task.
struct ExperimentRecord {
  std::string task_id;
  std::vector<double> encoding;
  double performance = 0.0;
  std::uint64_t seed = 0;
  std::string backend;
  std::string created_at;  // ISO-8601 UTC

  friend bool operator==(const ExperimentRecord&, const ExperimentRecord&) = default;
};

class ExperimentDB {
 public:
  ExperimentDB() = default;
  explicit ExperimentDB(child::ArchSpace space) : space_(std::move(space)) {}

  const std::optional<child::ArchSpace>& space() const { return space_; }
  std::string fingerprint() const { return space_ ? space_->fingerprint() : std::string(); }

  // Validates the record against the arch space and appends it.
  void add(ExperimentRecord record);

  const std::map<std::string, std::vector<ExperimentRecord>>& by_task() const { return records_; }
  const std::vector<ExperimentRecord>& records(const std::string& task_id) const;
  bool contains(const std::string& task_id) const { return records_.count(task_id) != 0; }
  std::vector<std::string> task_ids() const;
  std::size_t size() const;
  bool empty() const { return records_.empty(); }

  // Copy restricted to the given tasks.
  ExperimentDB subset(const std::vector<std::string>& task_ids) const;
  ExperimentDB without(const std::string& task_id) const;

  friend bool operator==(const ExperimentDB&, const ExperimentDB&) = default;

 private:
  std::optional<child::ArchSpace> space_;
  std::map<std::string, std::vector<ExperimentRecord>> records_;
};

struct PopulateOptions {
  int n_per_task = 300;
  std::uint64_t seed = 0;
  int jobs = 1;
};

// Draws n_per_task random encodings per task and measures each through the
// backend. Failed measurements are skipped with a warning on stderr.
ExperimentDB populate(const std::vector<tasks::TaskDataset>& tasks, const child::ArchSpace& space,
                      const child::PerfBackend& backend, const PopulateOptions& options);

// JSON-lines: header {"version","arch_space"} then one record per line.
void write_db(std::ostream& out, const ExperimentDB& db);
ExperimentDB read_db(std::istream& in);
void save(const ExperimentDB& db, const std::string& path);
ExperimentDB load(const std::string& path);
// Also rejects a file whose fingerprint differs from `expected`.
ExperimentDB load(const std::string& path, const child::ArchSpace& expected);

// Uniform sample without replacement; all records if the task has fewer.
std::vector<ExperimentRecord> batch_for_task(const ExperimentDB& db, const std::string& task_id,
                                             std::size_t batch_size, Rng& rng);

// UTC timestamp for created_at; honours SOURCE_DATE_EPOCH when set.
std::string current_timestamp();

}  // namespace archrank::expdb
