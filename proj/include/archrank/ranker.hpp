#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "archrank/numerics.hpp"
#include "archrank/optim.hpp"
#include "archrank/random.hpp"
#include "archrank/tape.hpp"
#include "archrank/tasks.hpp"

namespace archrank::ranker {

inline constexpr std::size_t kEmbedWidth = 50;
inline constexpr std::size_t kScoreHidden1 = 50;
inline constexpr std::size_t kScoreHidden2 = 10;

// Predictor v(u, z) = rho(u, z), z = mean_x phi(x).
//   phi: d_in -> 50 (relu) -> 50 (relu)
//   rho: u_dim + 50 -> 50 (relu) -> 10 (relu) -> 1 (linear)
struct RankerWeights {
  std::size_t input_dim = 0;
  std::size_t encoding_dim = 0;
  num::Matrix phi1_w, phi1_b, phi2_w, phi2_b;
  num::Matrix rho1_w, rho1_b, rho2_w, rho2_b, rho3_w, rho3_b;

  static constexpr std::size_t kTensorCount = 10;
  static const std::array<const char*, kTensorCount>& tensor_names();

  // Every tensor uniform in (-scale, scale).
  static RankerWeights init(std::size_t input_dim, std::size_t encoding_dim, std::uint64_t seed,
                            double scale = 0.05);
  static RankerWeights zeros(std::size_t input_dim, std::size_t encoding_dim);

  std::array<num::Matrix*, kTensorCount> tensors();
  std::array<const num::Matrix*, kTensorCount> tensors() const;
  std::vector<num::ParamRef> params();

  void validate() const;

  friend bool operator==(const RankerWeights&, const RankerWeights&) = default;
};

// Parameter leaves of one RankerWeights on a tape.
struct BoundRanker {
  std::array<num::NodeId, RankerWeights::kTensorCount> nodes{};
  // Adjoints in tensor order, after tape.backward().
  std::vector<num::Matrix> grads(const num::Tape& tape) const;
};

BoundRanker bind(num::Tape& tape, const RankerWeights& weights, bool trainable);

// z = mean over rows of phi(samples); samples is n x d_in.
num::NodeId meta_features(num::Tape& tape, const BoundRanker& r, num::NodeId samples);
// Column of scores for each row of encodings (n x u_dim) against one z (1 x 50).
num::NodeId score(num::Tape& tape, const BoundRanker& r, num::NodeId encodings, num::NodeId z);

std::vector<double> meta_features(const RankerWeights& weights, const num::Matrix& samples);
double score(const RankerWeights& weights, std::span<const double> u, std::span<const double> z);
std::vector<double> score_batch(const RankerWeights& weights, const num::Matrix& encodings,
                                std::span<const double> z);
// Score and its gradient with respect to u.
double score_with_gradient(const RankerWeights& weights, std::span<const double> u,
                           std::span<const double> z, std::vector<double>& grad_u);

// How task samples are drawn for meta-features. batch_size 0 uses the whole
// train split.
struct MetaSampling {
  std::size_t batch_size = 256;
  std::size_t n_batches = 10;
};

// z for one random batch of the task's train split.
std::vector<double> task_meta_features(const RankerWeights& weights, const tasks::TaskDataset& task,
                                       std::size_t batch_size, Rng& rng);
// Mean of z over n_batches batches drawn with Rng(seed).
std::vector<double> task_centroid(const RankerWeights& weights, const tasks::TaskDataset& task,
                                  const MetaSampling& sampling, std::uint64_t seed);
// Euclidean distance of the two task centroids; both use batches drawn from
// the same seed, so distance(a, a) is exactly zero.
double task_embedding_distance(const RankerWeights& weights, const tasks::TaskDataset& a,
                               const tasks::TaskDataset& b, const MetaSampling& sampling,
                               std::uint64_t seed);

// JSON checkpoint {"version","input_dim","encoding_dim","tensors":[{name,rows,cols,data}]}.
std::string to_json(const RankerWeights& weights);
RankerWeights from_json(const std::string& text);
void save_weights(const RankerWeights& weights, const std::string& path);
RankerWeights load_weights(const std::string& path);

}  // namespace archrank::ranker
