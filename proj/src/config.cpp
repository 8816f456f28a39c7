#include "archrank/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "archrank/error.hpp"

namespace archrank::config {

std::string_view to_string(BackendKind kind) {
  return kind == BackendKind::analytic ? "analytic" : "real-train";
}

BackendKind backend_from_string(std::string_view name) {
  if (name == "analytic") return BackendKind::analytic;
  if (name == "real-train" || name == "real_train") return BackendKind::real_train;
  throw ContractViolation("unknown backend '" + std::string(name) +
                          "' (expected analytic or real-train)");
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ContractViolation("malformed number '" + text + "'");
  return value;
}

std::string show(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T, typename Access>
Field number(std::string key, Access access) {
  return Field{std::move(key),
               [access](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(v); },
               [access](const RunConfig& c) {
                 if constexpr (std::is_floating_point_v<T>) {
                   return show(access(const_cast<RunConfig&>(c)));
                 } else {
                   return std::to_string(access(const_cast<RunConfig&>(c)));
                 }
               }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number<std::uint64_t>("seed", [](RunConfig& c) -> auto& { return c.seed; }));
    f.push_back(number<int>("jobs", [](RunConfig& c) -> auto& { return c.jobs; }));

    f.push_back(number<int>("tasks.num_tasks", [](RunConfig& c) -> auto& { return c.tasks.num_tasks; }));
    f.push_back(number<int>("tasks.input_dim", [](RunConfig& c) -> auto& { return c.tasks.input_dim; }));
    f.push_back(number<int>("tasks.min_classes", [](RunConfig& c) -> auto& { return c.tasks.min_classes; }));
    f.push_back(number<int>("tasks.max_classes", [](RunConfig& c) -> auto& { return c.tasks.max_classes; }));
    f.push_back(number<int>("tasks.min_samples", [](RunConfig& c) -> auto& { return c.tasks.min_samples; }));
    f.push_back(number<int>("tasks.max_samples", [](RunConfig& c) -> auto& { return c.tasks.max_samples; }));
    f.push_back(number<double>("tasks.class_separation", [](RunConfig& c) -> auto& { return c.tasks.class_separation; }));
    f.push_back(number<double>("tasks.cluster_spread", [](RunConfig& c) -> auto& { return c.tasks.cluster_spread; }));
    f.push_back(number<double>("tasks.label_noise", [](RunConfig& c) -> auto& { return c.tasks.label_noise; }));
    f.push_back(number<int>("tasks.latent_dim", [](RunConfig& c) -> auto& { return c.tasks.latent_dim; }));
    f.push_back(number<double>("tasks.center_scale", [](RunConfig& c) -> auto& { return c.tasks.center_scale; }));
    f.push_back(number<double>("tasks.train_fraction", [](RunConfig& c) -> auto& { return c.tasks.train_fraction; }));
    f.push_back(number<double>("tasks.val_fraction", [](RunConfig& c) -> auto& { return c.tasks.val_fraction; }));

    f.push_back(number<int>("arch.feature_modules", [](RunConfig& c) -> auto& { return c.arch.feature_modules; }));
    f.push_back(number<int>("arch.layers", [](RunConfig& c) -> auto& { return c.arch.layers; }));
    f.push_back(Field{"arch.base_sizes",
                      [](RunConfig& c, const std::string& v) {
                        c.arch.base_sizes.clear();
                        for (const auto& s : split_list(v)) c.arch.base_sizes.push_back(parse_number<int>(s));
                      },
                      [](const RunConfig& c) {
                        std::string s;
                        for (int v : c.arch.base_sizes) s += (s.empty() ? "" : ",") + std::to_string(v);
                        return s;
                      }});
    f.push_back(Field{"arch.base_acts",
                      [](RunConfig& c, const std::string& v) {
                        c.arch.base_acts.clear();
                        for (const auto& s : split_list(v)) c.arch.base_acts.push_back(num::activation_from_string(s));
                      },
                      [](const RunConfig& c) {
                        std::string s;
                        for (auto a : c.arch.base_acts) s += (s.empty() ? "" : ",") + std::string(num::to_string(a));
                        return s;
                      }});
    f.push_back(number<int>("arch.common_width", [](RunConfig& c) -> auto& { return c.arch.common_width; }));

    f.push_back(number<int>("db.records_per_task", [](RunConfig& c) -> auto& { return c.records_per_task; }));
    f.push_back(Field{"db.backend",
                      [](RunConfig& c, const std::string& v) { c.backend = backend_from_string(v); },
                      [](const RunConfig& c) { return std::string(to_string(c.backend)); }});
    f.push_back(number<double>("db.analytic.temperature", [](RunConfig& c) -> auto& { return c.analytic.temperature; }));
    f.push_back(number<double>("db.analytic.noise", [](RunConfig& c) -> auto& { return c.analytic.noise_sigma; }));
    f.push_back(number<double>("db.analytic.shared_scale", [](RunConfig& c) -> auto& { return c.analytic.shared_scale; }));
    f.push_back(number<double>("db.analytic.task_scale", [](RunConfig& c) -> auto& { return c.analytic.task_scale; }));
    f.push_back(number<int>("db.child.epochs", [](RunConfig& c) -> auto& { return c.child.epochs; }));
    f.push_back(number<double>("db.child.learning_rate", [](RunConfig& c) -> auto& { return c.child.learning_rate; }));
    f.push_back(number<int>("db.child.batch_size", [](RunConfig& c) -> auto& { return c.child.batch_size; }));

    f.push_back(number<double>("ranker.init_scale", [](RunConfig& c) -> auto& { return c.init_scale; }));
    f.push_back(number<std::size_t>("ranker.meta_batch", [](RunConfig& c) -> auto& { return c.meta_batch; }));
    f.push_back(number<std::size_t>("ranker.meta_batches", [](RunConfig& c) -> auto& { return c.meta_batches; }));

    f.push_back(Field{"loss.kind",
                      [](RunConfig& c, const std::string& v) { c.loss.kind = losses::loss_kind_from_string(v); },
                      [](const RunConfig& c) { return std::string(losses::to_string(c.loss.kind)); }});
    f.push_back(number<double>("loss.margin", [](RunConfig& c) -> auto& { return c.loss.margin; }));
    f.push_back(number<double>("loss.gap", [](RunConfig& c) -> auto& { return c.loss.gap; }));

    f.push_back(number<double>("opt.lr", [](RunConfig& c) -> auto& { return c.learning_rate; }));
    f.push_back(number<double>("opt.momentum", [](RunConfig& c) -> auto& { return c.momentum; }));
    f.push_back(number<int>("opt.steps", [](RunConfig& c) -> auto& { return c.steps; }));
    f.push_back(number<std::size_t>("opt.record_batch", [](RunConfig& c) -> auto& { return c.record_batch; }));

    f.push_back(number<double>("search.eta", [](RunConfig& c) -> auto& { return c.search.step_size; }));
    f.push_back(number<int>("search.max_iters", [](RunConfig& c) -> auto& { return c.search.max_iters; }));
    f.push_back(number<double>("search.tol", [](RunConfig& c) -> auto& { return c.search.tolerance; }));
    f.push_back(number<int>("search.warm_tasks", [](RunConfig& c) -> auto& { return c.search.n_warm_tasks; }));
    f.push_back(number<int>("search.top_per_task", [](RunConfig& c) -> auto& { return c.search.n_top_per_task; }));

    f.push_back(number<int>("eval.n_repeats", [](RunConfig& c) -> auto& { return c.n_repeats; }));
    f.push_back(Field{"eval.losses",
                      [](RunConfig& c, const std::string& v) {
                        c.eval_losses.clear();
                        for (const auto& s : split_list(v)) c.eval_losses.push_back(losses::loss_kind_from_string(s));
                      },
                      [](const RunConfig& c) {
                        std::string s;
                        for (auto k : c.eval_losses) s += (s.empty() ? "" : ",") + std::string(losses::to_string(k));
                        return s;
                      }});

    f.push_back(Field{"paths.out_dir",
                      [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                      [](const RunConfig& c) { return c.out_dir; }});
    return f;
  }();
  return table;
}

}  // namespace

std::vector<std::string> known_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

void set_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, trim(value));
      return;
    }
  }
  throw ContractViolation("unknown config key '" + key + "'");
}

void apply_entries(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::vector<std::string> problems;
  for (const auto& [key, value] : entries) {
    try {
      set_value(cfg, key, value);
    } catch (const ContractViolation& e) {
      problems.push_back(key + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() == 1 ? "" : "s") + "):";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw ContractViolation(msg);
  }
}

std::vector<std::pair<std::string, std::string>> parse_entries(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', "config line " + std::to_string(line_no) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(line_no) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    entries.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return entries;
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  RunConfig cfg;
  apply_entries(cfg, parse_entries(in));
  return cfg;
}

RunConfig load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  RunConfig cfg;
  apply_entries(cfg, parse_entries(in));
  return cfg;
}

void validate(const RunConfig& cfg) {
  std::vector<std::string> problems;
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const ContractViolation& e) {
      problems.emplace_back(e.what());
    }
  };
  check([&] { cfg.task_family().validate(); });
  check([&] { cfg.arch.validate(); });
  check([&] { cfg.train_config().validate(); });
  check([&] { cfg.search_config().validate(); });
  // Leave-one-out keeps at least two training tasks to warm-start from.
  if (cfg.tasks.num_tasks < 3) problems.emplace_back("tasks.num_tasks must be >= 3");
  if (cfg.jobs < 1) problems.emplace_back("jobs must be >= 1");
  if (cfg.records_per_task < 2) problems.emplace_back("db.records_per_task must be >= 2");
  if (cfg.analytic.temperature <= 0.0) problems.emplace_back("db.analytic.temperature must be positive");
  if (cfg.analytic.noise_sigma < 0.0) problems.emplace_back("db.analytic.noise must be >= 0");
  if (cfg.n_repeats < 1) problems.emplace_back("eval.n_repeats must be >= 1");
  if (cfg.eval_losses.empty()) problems.emplace_back("eval.losses must name at least one loss");
  if (cfg.meta_batches < 1) problems.emplace_back("ranker.meta_batches must be >= 1");
  if (!problems.empty()) {
    std::string msg = "invalid config:";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw ContractViolation(msg);
  }
}

std::vector<std::pair<std::string, std::string>> dump(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

tasks::TaskFamilyConfig RunConfig::task_family() const {
  tasks::TaskFamilyConfig t = tasks;
  t.seed = mix_seed(seed, "tasks");
  return t;
}

child::AnalyticParams RunConfig::analytic_params() const {
  child::AnalyticParams p = analytic;
  p.seed = mix_seed(seed, "analytic");
  return p;
}

std::uint64_t RunConfig::feature_seed() const { return mix_seed(seed, "features"); }

expdb::PopulateOptions RunConfig::populate_options() const {
  return expdb::PopulateOptions{records_per_task, mix_seed(seed, "populate"), jobs};
}

trainer::TrainConfig RunConfig::train_config() const {
  trainer::TrainConfig t;
  t.loss = loss;
  t.learning_rate = learning_rate;
  t.momentum = momentum;
  t.steps = steps;
  t.record_batch = record_batch;
  t.sample_batch = meta_batch;
  t.init_scale = init_scale;
  t.seed = mix_seed(seed, "train");
  return t;
}

search::SearchConfig RunConfig::search_config() const {
  search::SearchConfig s = search;
  s.meta = ranker::MetaSampling{meta_batch, meta_batches};
  return s;
}

eval::LooConfig RunConfig::loo_config() const {
  eval::LooConfig l;
  for (auto kind : eval_losses) l.losses.push_back(losses::LossConfig{kind, loss.margin, loss.gap});
  l.n_repeats = n_repeats;
  l.train = train_config();
  l.search = search_config();
  l.eval_meta = ranker::MetaSampling{meta_batch, meta_batches};
  l.seed = mix_seed(seed, "loo");
  l.jobs = jobs;
  return l;
}

}  // namespace archrank::config
