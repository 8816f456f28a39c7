#include "archrank/expdb.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "archrank/error.hpp"

namespace archrank::expdb {

using nlohmann::json;

void ExperimentDB::add(ExperimentRecord record) {
  if (space_) {
    require(record.encoding.size() == space_->encoding_dim(),
            "record for '" + record.task_id + "' has encoding length " +
                std::to_string(record.encoding.size()) + ", arch space expects " +
                std::to_string(space_->encoding_dim()));
  }
  require(std::isfinite(record.performance) && record.performance >= 0.0 &&
              record.performance <= 1.0,
          "record performance must lie in [0,1]");
  records_[record.task_id].push_back(std::move(record));
}

const std::vector<ExperimentRecord>& ExperimentDB::records(const std::string& task_id) const {
  const auto it = records_.find(task_id);
  if (it == records_.end()) throw ContractViolation("experiment db: unknown task_id '" + task_id + "'");
  return it->second;
}

std::vector<std::string> ExperimentDB::task_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : records_) ids.push_back(id);
  return ids;
}

std::size_t ExperimentDB::size() const {
  std::size_t n = 0;
  for (const auto& [_, recs] : records_) n += recs.size();
  return n;
}

ExperimentDB ExperimentDB::subset(const std::vector<std::string>& task_ids) const {
  ExperimentDB out;
  out.space_ = space_;
  for (const auto& id : task_ids) out.records_[id] = records(id);
  return out;
}

ExperimentDB ExperimentDB::without(const std::string& task_id) const {
  ExperimentDB out = *this;
  out.records_.erase(task_id);
  return out;
}

std::string current_timestamp() {
  std::time_t t = 0;
  if (const char* fixed = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(fixed, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ExperimentDB populate(const std::vector<tasks::TaskDataset>& tasks, const child::ArchSpace& space,
                      const child::PerfBackend& backend, const PopulateOptions& options) {
  require(options.n_per_task >= 2, "populate needs at least 2 records per task");
  space.validate();
  struct Job {
    const tasks::TaskDataset* task;
    std::vector<double> encoding;
    std::uint64_t seed;
    std::optional<double> p;
  };
  std::vector<Job> jobs;
  for (const auto& task : tasks) {
    Rng rng(mix_seed(options.seed, "populate:" + task.task_id));
    for (int i = 0; i < options.n_per_task; ++i) {
      auto u = child::random_encoding(space, rng);
      jobs.push_back(Job{&task, std::move(u), rng(), std::nullopt});
    }
  }

  std::mutex log_mutex;
  auto run = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < jobs.size(); i += stride) {
      try {
        const double p = backend.measure(jobs[i].encoding, *jobs[i].task, jobs[i].seed);
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) throw Error("performance out of range");
        jobs[i].p = p;
      } catch (const std::exception& e) {
        std::lock_guard lock(log_mutex);
        std::cerr << "warning: skipping record " << i << " of task '" << jobs[i].task->task_id
                  << "': " << e.what() << '\n';
      }
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, options.jobs));
  if (workers == 1) {
    run(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w, workers);
  }

  ExperimentDB db(space);
  const std::string stamp = current_timestamp();
  for (auto& job : jobs) {
    if (!job.p) continue;
    db.add(ExperimentRecord{job.task->task_id, std::move(job.encoding), *job.p, job.seed,
                            backend.name(), stamp});
  }
  for (const auto& task : tasks) {
    if (!db.contains(task.task_id) || db.records(task.task_id).size() < 2) {
      throw Error("populate: fewer than 2 successful measurements for task '" + task.task_id + "'");
    }
  }
  return db;
}

namespace {

json space_to_json(const child::ArchSpace& s) {
  std::vector<std::string> acts;
  for (auto a : s.base_acts) acts.emplace_back(num::to_string(a));
  return {{"fingerprint", s.fingerprint()},
          {"feature_modules", s.feature_modules},
          {"layers", s.layers},
          {"base_sizes", s.base_sizes},
          {"base_acts", acts},
          {"common_width", s.common_width}};
}

child::ArchSpace space_from_json(const json& j) {
  child::ArchSpace s;
  s.feature_modules = j.at("feature_modules").get<int>();
  s.layers = j.at("layers").get<int>();
  s.base_sizes = j.at("base_sizes").get<std::vector<int>>();
  s.base_acts.clear();
  for (const auto& a : j.at("base_acts")) s.base_acts.push_back(num::activation_from_string(a.get<std::string>()));
  s.common_width = j.at("common_width").get<int>();
  require(s.fingerprint() == j.at("fingerprint").get<std::string>(),
          "arch space fields disagree with the stored fingerprint");
  return s;
}

}  // namespace

void write_db(std::ostream& out, const ExperimentDB& db) {
  require(db.space().has_value(), "cannot save an experiment db without an arch space");
  out << json{{"version", 1}, {"arch_space", space_to_json(*db.space())}}.dump() << '\n';
  for (const auto& [_, recs] : db.by_task()) {
    for (const auto& r : recs) {
      json line = {{"task_id", r.task_id},       {"encoding", r.encoding},
                   {"performance", r.performance}, {"seed", r.seed},
                   {"backend", r.backend},        {"created_at", r.created_at}};
      out << line.dump() << '\n';
    }
  }
}

ExperimentDB read_db(std::istream& in) {
  ExperimentDB db;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!have_header) {
        require(j.at("version").get<int>() == 1, "unsupported db version");
        db = ExperimentDB(space_from_json(j.at("arch_space")));
        have_header = true;
        continue;
      }
      db.add(ExperimentRecord{j.at("task_id").get<std::string>(),
                              j.at("encoding").get<std::vector<double>>(),
                              j.at("performance").get<double>(),
                              j.at("seed").get<std::uint64_t>(),
                              j.at("backend").get<std::string>(),
                              j.at("created_at").get<std::string>()});
    } catch (const std::exception& e) {
      throw Error("experiment db line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return db;
}

void save(const ExperimentDB& db, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  write_db(out, db);
  if (!out) throw Error("failed writing '" + path + "'");
}

ExperimentDB load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_db(in);
}

ExperimentDB load(const std::string& path, const child::ArchSpace& expected) {
  ExperimentDB db = load(path);
  if (db.space() && db.fingerprint() != expected.fingerprint()) {
    throw Error("experiment db '" + path + "' was built for arch space [" + db.fingerprint() +
                "] but [" + expected.fingerprint() + "] is configured");
  }
  return db;
}

std::vector<ExperimentRecord> batch_for_task(const ExperimentDB& db, const std::string& task_id,
                                             std::size_t batch_size, Rng& rng) {
  const auto& recs = db.records(task_id);
  const auto picks = sample_without_replacement(recs.size(), std::min(batch_size, recs.size()), rng);
  std::vector<ExperimentRecord> out;
  out.reserve(picks.size());
  for (std::size_t i : picks) out.push_back(recs[i]);
  return out;
}

}  // namespace archrank::expdb
