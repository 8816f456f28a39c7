#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "archrank/error.hpp"
#include "archrank/expdb.hpp"

using namespace archrank;
using child::ArchSpace;

namespace {

std::vector<tasks::TaskDataset> make_tasks(int k) {
  tasks::TaskFamilyConfig cfg;
  cfg.num_tasks = k;
  cfg.min_samples = 60;
  cfg.max_samples = 80;
  cfg.seed = 3;
  return tasks::generate_tasks(cfg);
}

child::AnalyticBackend quiet_backend(const std::vector<tasks::TaskDataset>& ts, double noise = 0.0,
                                    const ArchSpace& space = ArchSpace::desk()) {
  child::AnalyticParams p;
  p.noise_sigma = noise;
  return child::AnalyticBackend(space, ts, p);
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("archrank_test_" + name);
}

// Fails every other measurement to exercise the skip path.
class FlakyBackend final : public child::PerfBackend {
 public:
  std::string name() const override { return "flaky"; }
  double measure(std::span<const double>, const tasks::TaskDataset&, std::uint64_t seed) const override {
    if (seed % 2) throw Error("simulated failure");
    return 0.5;
  }
  double evaluate_found(std::span<const double> u, const tasks::TaskDataset& t,
                        std::uint64_t seed) const override {
    return measure(u, t, seed);
  }
};

}  // namespace

TEST_CASE("populate") {
  SUBCASE("two records on one task") {
    const auto ts = make_tasks(1);
    const auto db = expdb::populate(ts, ArchSpace::desk(), quiet_backend(ts), {2, 1, 1});
    REQUIRE(db.size() == 2);
    const auto& r = db.records(ts[0].task_id);
    CHECK(r[0].encoding != r[1].encoding);
    for (const auto& rec : r) {
      CHECK(rec.encoding.size() == 21);
      CHECK(rec.backend == "analytic");
      CHECK(rec.performance >= 0.0);
      CHECK(rec.performance <= 1.0);
    }
  }
  SUBCASE("same seed reproduces every value bitwise, regardless of job count") {
    const auto ts = make_tasks(3);
    const auto backend = quiet_backend(ts, 0.01);
    const auto a = expdb::populate(ts, ArchSpace::desk(), backend, {40, 7, 1});
    const auto b = expdb::populate(ts, ArchSpace::desk(), backend, {40, 7, 3});
    REQUIRE(a.size() == 120);
    for (const auto& id : a.task_ids()) {
      const auto& ra = a.records(id);
      const auto& rb = b.records(id);
      REQUIRE(ra.size() == rb.size());
      for (std::size_t i = 0; i < ra.size(); ++i) {
        CHECK(ra[i].encoding == rb[i].encoding);
        CHECK(ra[i].performance == rb[i].performance);
        CHECK(ra[i].seed == rb[i].seed);
      }
    }
  }
  SUBCASE("large-space record count") {
    const auto ts = make_tasks(10);
    const auto db = expdb::populate(ts, ArchSpace::large(), quiet_backend(ts, 0.0, ArchSpace::large()), {500, 1, 1});
    CHECK(db.size() == 5000);
    for (const auto& id : db.task_ids()) CHECK(db.records(id).size() == 500);
  }
  SUBCASE("failures are skipped, too few survivors is an error") {
    const auto ts = make_tasks(1);
    FlakyBackend flaky;
    const auto db = expdb::populate(ts, ArchSpace::desk(), flaky, {20, 1, 1});
    CHECK(db.size() > 2);
    CHECK(db.size() < 20);
    CHECK_THROWS_AS(expdb::populate(ts, ArchSpace::desk(), flaky, {2, 1, 1}), Error);
    CHECK_THROWS(expdb::populate(ts, ArchSpace::desk(), quiet_backend(ts), {1, 1, 1}));
  }
}

TEST_CASE("add validates records") {
  expdb::ExperimentDB db(ArchSpace::desk());
  expdb::ExperimentRecord r{"t", std::vector<double>(21, 0.0), 0.5, 1, "analytic", "x"};
  db.add(r);
  r.performance = 1.5;
  CHECK_THROWS_AS(db.add(r), ContractViolation);
  r.performance = 0.5;
  r.encoding.resize(20);
  CHECK_THROWS_AS(db.add(r), ContractViolation);
}

TEST_CASE("persistence") {
  const auto ts = make_tasks(2);
  const auto db = expdb::populate(ts, ArchSpace::desk(), quiet_backend(ts, 0.01), {25, 4, 1});

  SUBCASE("save then load is exact") {
    const auto path = temp_file("db_roundtrip.jsonl");
    expdb::save(db, path.string());
    CHECK(expdb::load(path.string()) == db);
    CHECK(expdb::load(path.string(), ArchSpace::desk()) == db);
    std::filesystem::remove(path);
  }
  SUBCASE("fingerprint mismatch") {
    const auto path = temp_file("db_fingerprint.jsonl");
    expdb::save(db, path.string());
    CHECK_THROWS_AS(expdb::load(path.string(), ArchSpace::large()), Error);
    std::filesystem::remove(path);
  }
  SUBCASE("corrupt line reports its number") {
    std::ostringstream out;
    expdb::write_db(out, db);
    std::istringstream lines(out.str());
    std::string text, line;
    int n = 0;
    while (std::getline(lines, line)) {
      ++n;
      text += (n == 4 ? std::string("{\"task_id\": oops") : line) + "\n";
    }
    std::istringstream in(text);
    try {
      (void)expdb::read_db(in);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }
  SUBCASE("empty file is an empty, valid database") {
    const auto path = temp_file("db_empty.jsonl");
    { std::ofstream touch(path); }
    const auto empty = expdb::load(path.string());
    CHECK(empty.size() == 0);
    CHECK(empty.empty());
    std::filesystem::remove(path);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(expdb::load(temp_file("does_not_exist").string()), Error); }
}

TEST_CASE("batch_for_task") {
  const auto ts = make_tasks(2);
  const auto db = expdb::populate(ts, ArchSpace::desk(), quiet_backend(ts), {30, 2, 1});
  const std::string id = ts[0].task_id;
  const auto& all = db.records(id);

  SUBCASE("oversized batch returns a permutation of all records") {
    Rng rng(1);
    const auto b = expdb::batch_for_task(db, id, 100, rng);
    REQUIRE(b.size() == all.size());
    std::multiset<double> got, want;
    for (const auto& r : b) got.insert(r.performance);
    for (const auto& r : all) want.insert(r.performance);
    CHECK(got == want);
  }
  SUBCASE("deterministic given the rng state") {
    Rng a(5), b(5);
    const auto x = expdb::batch_for_task(db, id, 8, a);
    const auto y = expdb::batch_for_task(db, id, 8, b);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);
  }
  SUBCASE("records come only from the requested task") {
    Rng rng(6);
    for (const auto& r : expdb::batch_for_task(db, id, 8, rng)) CHECK(r.task_id == id);
  }
  SUBCASE("unknown task") {
    Rng rng(1);
    CHECK_THROWS(expdb::batch_for_task(db, "nope", 3, rng));
  }
  SUBCASE("inclusion frequencies lie within 3 sigma binomial bounds") {
    Rng rng(7);
    const std::size_t k = 8, draws = 10000;
    std::map<double, int> hits;  // encodings are distinct, so the first logit identifies a record
    for (std::size_t d = 0; d < draws; ++d)
      for (const auto& r : expdb::batch_for_task(db, id, k, rng)) ++hits[r.encoding[0]];
    REQUIRE(hits.size() == all.size());
    const double p = static_cast<double>(k) / static_cast<double>(all.size());
    const double mean = draws * p, sd = std::sqrt(draws * p * (1 - p));
    int outside = 0;
    for (const auto& [key, c] : hits) outside += std::abs(c - mean) > 3 * sd;
    CHECK(outside <= 1);
  }
}

TEST_CASE("subset and without") {
  const auto ts = make_tasks(3);
  const auto db = expdb::populate(ts, ArchSpace::desk(), quiet_backend(ts), {5, 2, 1});
  const auto rest = db.without(ts[1].task_id);
  CHECK_FALSE(rest.contains(ts[1].task_id));
  CHECK(rest.size() == 10);
  CHECK(db.subset({ts[1].task_id}).size() == 5);
  CHECK(rest.fingerprint() == db.fingerprint());
}
