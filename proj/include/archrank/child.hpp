#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "archrank/numerics.hpp"
#include "archrank/optim.hpp"
#include "archrank/random.hpp"
#include "archrank/tape.hpp"
#include "archrank/tasks.hpp"

namespace archrank::child {

// The searchable family: G feature modules softly selected, then L
// parametrized layers, each a soft mixture over B = |sizes| x |acts| base
// layers plus a soft (apply, skip) gate.
struct ArchSpace {
  int feature_modules = 3;
  int layers = 3;
  std::vector<int> base_sizes{8, 16};
  std::vector<num::Activation> base_acts{num::Activation::relu, num::Activation::tanh};
  int common_width = 32;

  int bases_per_layer() const {
    return static_cast<int>(base_sizes.size() * base_acts.size());
  }
  // G + L*B + 2L
  std::size_t encoding_dim() const {
    return static_cast<std::size_t>(feature_modules + layers * bases_per_layer() + 2 * layers);
  }
  int base_size(int b) const { return base_sizes[static_cast<std::size_t>(b) / base_acts.size()]; }
  num::Activation base_act(int b) const {
    return base_acts[static_cast<std::size_t>(b) % base_acts.size()];
  }
  std::string fingerprint() const;
  void validate() const;

  static ArchSpace desk();
  // 7 + 7*12 + 2*7 = 105 dimensions.
  static ArchSpace large();

  friend bool operator==(const ArchSpace&, const ArchSpace&) = default;
};

struct ArchEncoding {
  std::vector<double> gamma;  // G
  num::Matrix alpha;          // L x B
  num::Matrix beta;           // L x 2, columns (apply, skip)

  static ArchEncoding zeros(const ArchSpace& space);
  // Flat order: gamma, alpha row-major, beta row-major.
  static ArchEncoding unflatten(const ArchSpace& space, std::span<const double> u);
  std::vector<double> flatten() const;

  friend bool operator==(const ArchEncoding&, const ArchEncoding&) = default;
};

struct MixWeights {
  std::vector<double> feature;  // G
  num::Matrix layer;            // L x B
  num::Matrix gate;             // L x 2

  std::vector<double> flatten() const;
};

MixWeights mix_weights(const ArchEncoding& encoding);

// Differentiable flat mixture vector s(u) for a 1 x encoding_dim node u.
num::NodeId mix_weights(num::Tape& tape, num::NodeId u, const ArchSpace& space);

// Random encoding with i.i.d. standard-normal logits.
std::vector<double> random_encoding(const ArchSpace& space, Rng& rng);

// --- real child training ---------------------------------------------------

struct TrainChildConfig {
  int epochs = 30;
  double learning_rate = 0.05;
  int batch_size = 32;
};

// Frozen random tanh projections d_in -> H standing in for pre-trained
// embedding modules.
struct FeatureBank {
  std::vector<num::Matrix> weights;  // H x d_in each
  std::vector<num::Matrix> biases;   // 1 x H each

  static FeatureBank make(const ArchSpace& space, std::size_t input_dim, std::uint64_t seed);
};

struct BaseLayer {
  int width = 0;
  num::Activation act = num::Activation::relu;
  num::Matrix in_weight;   // width x H
  num::Matrix in_bias;     // 1 x width
  num::Matrix out_weight;  // H x width
  num::Matrix out_bias;    // 1 x H
};

// A concrete child network for one encoding. Mixture weights are constants;
// only base layers and the classifier are trained.
class ChildNetwork {
 public:
  ChildNetwork(const ArchSpace& space, const ArchEncoding& encoding,
               std::shared_ptr<const FeatureBank> features, int num_classes, std::uint64_t seed);

  num::Matrix logits(const num::Matrix& x) const;
  double accuracy(const num::Matrix& x, std::span<const int> y) const;
  void train(const tasks::TaskDataset& task, const TrainChildConfig& cfg, std::uint64_t seed);

  // Reorders the base layers of every parametrized layer and the matching
  // mixture weights: new base b is old base perm[b].
  void permute_bases(std::span<const int> perm);

  const MixWeights& mix() const { return mix_; }

 private:
  struct Bound;
  num::NodeId forward(num::Tape& tape, const num::Matrix& x, Bound* bound) const;
  std::vector<num::ParamRef> params();

  MixWeights mix_;
  std::shared_ptr<const FeatureBank> features_;
  std::vector<std::vector<BaseLayer>> layers_;
  num::Matrix head_weight_;  // classes x H
  num::Matrix head_bias_;
};

// Number of child trainings started by this process.
std::size_t child_trainings_started();

// Builds the child for `u`, trains on the train split and returns accuracy
// on `eval_split`. Deterministic given seed.
double build_and_train_child(const ArchSpace& space, std::span<const double> u,
                             const tasks::TaskDataset& task,
                             std::shared_ptr<const FeatureBank> features,
                             const TrainChildConfig& cfg, std::uint64_t seed,
                             tasks::Split eval_split = tasks::Split::val);

// --- performance backends ----------------------------------------------------

// Source of the measured performance p for an (encoding, task) pair.
class PerfBackend {
 public:
  virtual ~PerfBackend() = default;
  virtual std::string name() const = 0;
  // Validation-style measurement used to populate the experiment database.
  virtual double measure(std::span<const double> u, const tasks::TaskDataset& task,
                         std::uint64_t seed) const = 0;
  // Held-out quality of a found architecture.
  virtual double evaluate_found(std::span<const double> u, const tasks::TaskDataset& task,
                                std::uint64_t seed) const = 0;
};

struct AnalyticParams {
  double temperature = 3.0;
  double noise_sigma = 0.01;
  // Shared component of every task's optimal logits.
  double shared_scale = 1.5;
  // Strength of the task-specific component driven by the task latent.
  double task_scale = 1.0;
  std::uint64_t seed = 0;
};

// p = clip01(exp(-|s(u) - c_task|^2 / temperature) + noise).
class AnalyticBackend final : public PerfBackend {
 public:
  AnalyticBackend(ArchSpace space, const std::vector<tasks::TaskDataset>& tasks,
                  AnalyticParams params);

  std::string name() const override { return "analytic"; }
  double measure(std::span<const double> u, const tasks::TaskDataset& task,
                 std::uint64_t seed) const override;
  double evaluate_found(std::span<const double> u, const tasks::TaskDataset& task,
                        std::uint64_t seed) const override;

  // Noisy surrogate draw.
  double surrogate_perf(std::span<const double> u, const std::string& task_id, Rng& rng) const;
  // Noise-free surrogate value.
  double expected_perf(std::span<const double> u, const std::string& task_id) const;
  // Noise-free surrogate as a tape node of a 1 x encoding_dim node.
  num::NodeId expected_perf(num::Tape& tape, num::NodeId u, const std::string& task_id) const;

  const std::vector<double>& optimum(const std::string& task_id) const;
  const std::vector<double>& optimum_logits(const std::string& task_id) const;
  void set_optimum(const std::string& task_id, std::vector<double> logits);
  const ArchSpace& space() const { return space_; }
  const AnalyticParams& params() const { return params_; }

 private:
  ArchSpace space_;
  AnalyticParams params_;
  std::map<std::string, std::vector<double>> optimum_logits_;
  std::map<std::string, std::vector<double>> optimum_;
};

class RealTrainBackend final : public PerfBackend {
 public:
  RealTrainBackend(ArchSpace space, std::size_t input_dim, TrainChildConfig cfg,
                   std::uint64_t feature_seed);

  std::string name() const override { return "real_train"; }
  double measure(std::span<const double> u, const tasks::TaskDataset& task,
                 std::uint64_t seed) const override;
  double evaluate_found(std::span<const double> u, const tasks::TaskDataset& task,
                        std::uint64_t seed) const override;

 private:
  ArchSpace space_;
  TrainChildConfig cfg_;
  std::shared_ptr<const FeatureBank> features_;
};

}  // namespace archrank::child
