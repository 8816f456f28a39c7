#include "archrank/child.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "archrank/error.hpp"

namespace archrank::child {

using num::Matrix;
using num::NodeId;
using num::Tape;

namespace {
std::atomic<std::size_t> g_child_trainings{0};
}

std::size_t child_trainings_started() { return g_child_trainings.load(); }

// --- ArchSpace ----------------------------------------------------------------

std::string ArchSpace::fingerprint() const {
  std::ostringstream os;
  os << "G=" << feature_modules << ";L=" << layers << ";sizes=";
  for (std::size_t i = 0; i < base_sizes.size(); ++i) os << (i ? "," : "") << base_sizes[i];
  os << ";acts=";
  for (std::size_t i = 0; i < base_acts.size(); ++i) {
    os << (i ? "," : "") << num::to_string(base_acts[i]);
  }
  os << ";H=" << common_width;
  return os.str();
}

void ArchSpace::validate() const {
  require(feature_modules >= 1, "arch space needs at least one feature module");
  require(layers >= 1, "arch space needs at least one layer");
  require(!base_sizes.empty() && !base_acts.empty(), "arch space needs base sizes and activations");
  require(std::all_of(base_sizes.begin(), base_sizes.end(), [](int s) { return s > 0; }),
          "base sizes must be positive");
  require(common_width > 0, "common width must be positive");
}

ArchSpace ArchSpace::desk() { return ArchSpace{}; }

ArchSpace ArchSpace::large() {
  ArchSpace s;
  s.feature_modules = 7;
  s.layers = 7;
  s.base_sizes = {8, 16, 32, 64, 128, 256};
  return s;
}

// --- encodings ------------------------------------------------------------------

ArchEncoding ArchEncoding::zeros(const ArchSpace& space) {
  return ArchEncoding{std::vector<double>(static_cast<std::size_t>(space.feature_modules), 0.0),
                      Matrix(static_cast<std::size_t>(space.layers),
                             static_cast<std::size_t>(space.bases_per_layer())),
                      Matrix(static_cast<std::size_t>(space.layers), 2)};
}

ArchEncoding ArchEncoding::unflatten(const ArchSpace& space, std::span<const double> u) {
  require(u.size() == space.encoding_dim(),
          "encoding has " + std::to_string(u.size()) + " entries, arch space expects " +
              std::to_string(space.encoding_dim()));
  require(std::all_of(u.begin(), u.end(), [](double v) { return std::isfinite(v); }),
          "encoding contains non-finite logits");
  ArchEncoding e = zeros(space);
  auto it = u.begin();
  std::copy_n(it, e.gamma.size(), e.gamma.begin());
  it += static_cast<std::ptrdiff_t>(e.gamma.size());
  std::copy_n(it, e.alpha.size(), e.alpha.flat().begin());
  it += static_cast<std::ptrdiff_t>(e.alpha.size());
  std::copy_n(it, e.beta.size(), e.beta.flat().begin());
  return e;
}

std::vector<double> ArchEncoding::flatten() const {
  std::vector<double> u(gamma);
  u.insert(u.end(), alpha.data().begin(), alpha.data().end());
  u.insert(u.end(), beta.data().begin(), beta.data().end());
  return u;
}

std::vector<double> MixWeights::flatten() const {
  std::vector<double> s(feature);
  s.insert(s.end(), layer.data().begin(), layer.data().end());
  s.insert(s.end(), gate.data().begin(), gate.data().end());
  return s;
}

MixWeights mix_weights(const ArchEncoding& encoding) {
  return MixWeights{num::softmax(encoding.gamma), num::softmax_rows(encoding.alpha),
                    num::softmax_rows(encoding.beta)};
}

NodeId mix_weights(Tape& tape, NodeId u, const ArchSpace& space) {
  const auto g = static_cast<std::size_t>(space.feature_modules);
  const auto l = static_cast<std::size_t>(space.layers);
  const auto b = static_cast<std::size_t>(space.bases_per_layer());
  require(tape.value(u).rows() == 1 && tape.value(u).cols() == space.encoding_dim(),
          "mix_weights: encoding node has shape " + num::shape_string(tape.value(u)));
  const NodeId feature = tape.softmax_rows(tape.slice_cols(u, 0, g));
  const NodeId layer = tape.reshape(
      tape.softmax_rows(tape.reshape(tape.slice_cols(u, g, l * b), l, b)), 1, l * b);
  const NodeId gate = tape.reshape(
      tape.softmax_rows(tape.reshape(tape.slice_cols(u, g + l * b, 2 * l), l, 2)), 1, 2 * l);
  const NodeId parts[] = {feature, layer, gate};
  return tape.concat_cols(parts);
}

std::vector<double> random_encoding(const ArchSpace& space, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> u(space.encoding_dim());
  for (double& v : u) v = normal(rng);
  return u;
}

// --- child network --------------------------------------------------------------

namespace {

Matrix uniform_matrix(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

double glorot(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

FeatureBank FeatureBank::make(const ArchSpace& space, std::size_t input_dim, std::uint64_t seed) {
  Rng rng(mix_seed(seed, "feature-bank"));
  FeatureBank bank;
  const auto h = static_cast<std::size_t>(space.common_width);
  const double limit = std::sqrt(3.0 / static_cast<double>(input_dim));
  for (int g = 0; g < space.feature_modules; ++g) {
    bank.weights.push_back(uniform_matrix(h, input_dim, limit, rng));
    bank.biases.push_back(uniform_matrix(1, h, 0.5, rng));
  }
  return bank;
}

struct ChildNetwork::Bound {
  std::vector<NodeId> params;
};

ChildNetwork::ChildNetwork(const ArchSpace& space, const ArchEncoding& encoding,
                           std::shared_ptr<const FeatureBank> features, int num_classes,
                           std::uint64_t seed)
    : mix_(mix_weights(encoding)), features_(std::move(features)) {
  space.validate();
  require(features_ && features_->weights.size() == static_cast<std::size_t>(space.feature_modules),
          "feature bank does not match the arch space");
  require(num_classes >= 2, "child network needs at least two classes");
  Rng rng(mix_seed(seed, "child-init"));
  const auto h = static_cast<std::size_t>(space.common_width);
  layers_.resize(static_cast<std::size_t>(space.layers));
  for (auto& layer : layers_) {
    for (int b = 0; b < space.bases_per_layer(); ++b) {
      BaseLayer base;
      base.width = space.base_size(b);
      base.act = space.base_act(b);
      const auto w = static_cast<std::size_t>(base.width);
      base.in_weight = uniform_matrix(w, h, glorot(h, w), rng);
      base.in_bias = Matrix(1, w);
      base.out_weight = uniform_matrix(h, w, glorot(w, h), rng);
      base.out_bias = Matrix(1, h);
      layer.push_back(std::move(base));
    }
  }
  const auto c = static_cast<std::size_t>(num_classes);
  head_weight_ = uniform_matrix(c, h, glorot(h, c), rng);
  head_bias_ = Matrix(1, c);
}

std::vector<num::ParamRef> ChildNetwork::params() {
  std::vector<num::ParamRef> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t b = 0; b < layers_[l].size(); ++b) {
      auto& base = layers_[l][b];
      const std::string tag = "layer" + std::to_string(l) + ".base" + std::to_string(b);
      out.push_back({tag + ".in_weight", &base.in_weight});
      out.push_back({tag + ".in_bias", &base.in_bias});
      out.push_back({tag + ".out_weight", &base.out_weight});
      out.push_back({tag + ".out_bias", &base.out_bias});
    }
  }
  out.push_back({"head.weight", &head_weight_});
  out.push_back({"head.bias", &head_bias_});
  return out;
}

NodeId ChildNetwork::forward(Tape& tape, const Matrix& x, Bound* bound) const {
  auto leaf = [&](const Matrix& m) {
    if (!bound) return tape.constant(m);
    const NodeId id = tape.variable(m);
    bound->params.push_back(id);
    return id;
  };
  const NodeId input = tape.constant(x);
  NodeId h = 0;
  for (std::size_t g = 0; g < features_->weights.size(); ++g) {
    const NodeId module = tape.linear(input, tape.constant(features_->weights[g]),
                                      tape.constant(features_->biases[g]), num::Activation::tanh);
    const NodeId weighted = tape.scale(module, mix_.feature[g]);
    h = g == 0 ? weighted : tape.add(h, weighted);
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    NodeId mixed = 0;
    for (std::size_t b = 0; b < layers_[l].size(); ++b) {
      const auto& base = layers_[l][b];
      const NodeId in_w = leaf(base.in_weight);
      const NodeId in_b = leaf(base.in_bias);
      const NodeId out_w = leaf(base.out_weight);
      const NodeId out_b = leaf(base.out_bias);
      const NodeId hidden = tape.linear(h, in_w, in_b, base.act);
      const NodeId projected = tape.linear(hidden, out_w, out_b);
      const NodeId weighted = tape.scale(projected, mix_.layer(l, b));
      mixed = b == 0 ? weighted : tape.add(mixed, weighted);
    }
    h = tape.add(tape.scale(mixed, mix_.gate(l, 0)), tape.scale(h, mix_.gate(l, 1)));
  }
  const NodeId head_w = leaf(head_weight_);
  const NodeId head_b = leaf(head_bias_);
  return tape.linear(h, head_w, head_b);
}

Matrix ChildNetwork::logits(const Matrix& x) const {
  Tape tape;
  return tape.value(forward(tape, x, nullptr));
}

double ChildNetwork::accuracy(const Matrix& x, std::span<const int> y) const {
  require(x.rows() == y.size() && !y.empty(), "accuracy: empty or mismatched batch");
  const Matrix out = logits(x);
  std::size_t correct = 0;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const auto row = out.row_span(r);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == y[r]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

void ChildNetwork::train(const tasks::TaskDataset& task, const TrainChildConfig& cfg,
                         std::uint64_t seed) {
  require(cfg.epochs >= 0 && cfg.batch_size > 0 && cfg.learning_rate > 0.0,
          "invalid child training config");
  Rng rng(mix_seed(seed, "child-train"));
  std::vector<std::size_t> order = task.train;
  auto refs = params();
  num::MomentumState sgd{0.0, cfg.learning_rate, {}};
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      Matrix x(end - start, task.input_dim());
      std::vector<int> y(end - start);
      for (std::size_t r = start; r < end; ++r) {
        const auto src = task.features.row_span(order[r]);
        std::copy(src.begin(), src.end(), x.row_span(r - start).begin());
        y[r - start] = task.labels[order[r]];
      }
      Tape tape;
      Bound bound;
      const NodeId loss = tape.softmax_cross_entropy(forward(tape, x, &bound), y);
      tape.backward(loss);
      std::vector<Matrix> grads;
      grads.reserve(bound.params.size());
      for (NodeId id : bound.params) grads.push_back(tape.grad(id));
      num::sgd_momentum_step(refs, grads, sgd);
    }
  }
}

void ChildNetwork::permute_bases(std::span<const int> perm) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    require(perm.size() == layers_[l].size(), "permute_bases: permutation size mismatch");
    std::vector<BaseLayer> reordered;
    std::vector<double> weights;
    for (int p : perm) {
      reordered.push_back(layers_[l].at(static_cast<std::size_t>(p)));
      weights.push_back(mix_.layer(l, static_cast<std::size_t>(p)));
    }
    layers_[l] = std::move(reordered);
    std::copy(weights.begin(), weights.end(), mix_.layer.row_span(l).begin());
  }
}

double build_and_train_child(const ArchSpace& space, std::span<const double> u,
                             const tasks::TaskDataset& task,
                             std::shared_ptr<const FeatureBank> features,
                             const TrainChildConfig& cfg, std::uint64_t seed,
                             tasks::Split eval_split) {
  require(!task.train.empty() && !task.split(eval_split).empty(),
          "task '" + task.task_id + "' has an empty train or evaluation split");
  require(task.num_classes >= 2, "task '" + task.task_id + "' is degenerate (one class)");
  ++g_child_trainings;
  ChildNetwork net(space, ArchEncoding::unflatten(space, u), std::move(features),
                   task.num_classes, seed);
  net.train(task, cfg, seed);
  const auto eval = tasks::whole_split(task, eval_split);
  return net.accuracy(eval.x, eval.y);
}

// --- backends -------------------------------------------------------------------

AnalyticBackend::AnalyticBackend(ArchSpace space, const std::vector<tasks::TaskDataset>& tasks,
                                 AnalyticParams params)
    : space_(std::move(space)), params_(params) {
  space_.validate();
  require(params_.temperature > 0.0, "analytic temperature must be positive");
  require(params_.noise_sigma >= 0.0, "analytic noise must be non-negative");
  const std::size_t dim = space_.encoding_dim();
  Rng rng(mix_seed(params_.seed, "analytic-optimum"));
  std::normal_distribution<double> normal;
  std::vector<double> shared(dim);
  for (double& v : shared) v = params_.shared_scale * normal(rng);
  std::size_t latent_dim = tasks.empty() ? 0 : tasks.front().profile.latent.size();
  Matrix loading(dim, latent_dim);
  const double norm = latent_dim ? 1.0 / std::sqrt(static_cast<double>(latent_dim)) : 0.0;
  for (double& v : loading.flat()) v = params_.task_scale * norm * normal(rng);
  for (const auto& task : tasks) {
    require(task.profile.latent.size() == latent_dim, "tasks disagree on latent dimension");
    std::vector<double> logits(shared);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < latent_dim; ++j) logits[i] += loading(i, j) * task.profile.latent[j];
    }
    set_optimum(task.task_id, std::move(logits));
  }
}

void AnalyticBackend::set_optimum(const std::string& task_id, std::vector<double> logits) {
  optimum_[task_id] = mix_weights(ArchEncoding::unflatten(space_, logits)).flatten();
  optimum_logits_[task_id] = std::move(logits);
}

const std::vector<double>& AnalyticBackend::optimum(const std::string& task_id) const {
  const auto it = optimum_.find(task_id);
  if (it == optimum_.end()) throw ContractViolation("analytic backend: unknown task_id '" + task_id + "'");
  return it->second;
}

const std::vector<double>& AnalyticBackend::optimum_logits(const std::string& task_id) const {
  optimum(task_id);
  return optimum_logits_.at(task_id);
}

double AnalyticBackend::expected_perf(std::span<const double> u, const std::string& task_id) const {
  const auto& target = optimum(task_id);
  const auto s = mix_weights(ArchEncoding::unflatten(space_, u)).flatten();
  return std::exp(-num::squared_distance(s, target) / params_.temperature);
}

NodeId AnalyticBackend::expected_perf(Tape& tape, NodeId u, const std::string& task_id) const {
  const NodeId s = mix_weights(tape, u, space_);
  const NodeId target = tape.constant(Matrix::row(optimum(task_id)));
  const NodeId dist = tape.sum(tape.square(tape.sub(s, target)));
  return tape.exp(tape.scale(dist, -1.0 / params_.temperature));
}

double AnalyticBackend::surrogate_perf(std::span<const double> u, const std::string& task_id,
                                       Rng& rng) const {
  double p = expected_perf(u, task_id);
  if (params_.noise_sigma > 0.0) p += std::normal_distribution<double>(0.0, params_.noise_sigma)(rng);
  return std::clamp(p, 0.0, 1.0);
}

double AnalyticBackend::measure(std::span<const double> u, const tasks::TaskDataset& task,
                                std::uint64_t seed) const {
  Rng rng(mix_seed(seed, "analytic-noise"));
  return surrogate_perf(u, task.task_id, rng);
}

double AnalyticBackend::evaluate_found(std::span<const double> u, const tasks::TaskDataset& task,
                                       std::uint64_t) const {
  return expected_perf(u, task.task_id);
}

RealTrainBackend::RealTrainBackend(ArchSpace space, std::size_t input_dim, TrainChildConfig cfg,
                                   std::uint64_t feature_seed)
    : space_(std::move(space)),
      cfg_(cfg),
      features_(std::make_shared<FeatureBank>(FeatureBank::make(space_, input_dim, feature_seed))) {}

double RealTrainBackend::measure(std::span<const double> u, const tasks::TaskDataset& task,
                                 std::uint64_t seed) const {
  return build_and_train_child(space_, u, task, features_, cfg_, seed, tasks::Split::val);
}

double RealTrainBackend::evaluate_found(std::span<const double> u, const tasks::TaskDataset& task,
                                        std::uint64_t seed) const {
  return build_and_train_child(space_, u, task, features_, cfg_, seed, tasks::Split::test);
}

}  // namespace archrank::child
