#include "archrank/ranker.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "archrank/error.hpp"

namespace archrank::ranker {

using num::Matrix;
using num::NodeId;
using num::Tape;

const std::array<const char*, RankerWeights::kTensorCount>& RankerWeights::tensor_names() {
  static const std::array<const char*, kTensorCount> names = {
      "phi1_w", "phi1_b", "phi2_w", "phi2_b", "rho1_w",
      "rho1_b", "rho2_w", "rho2_b", "rho3_w", "rho3_b"};
  return names;
}

RankerWeights RankerWeights::zeros(std::size_t input_dim, std::size_t encoding_dim) {
  require(input_dim > 0 && encoding_dim > 0, "ranker dimensions must be positive");
  RankerWeights w;
  w.input_dim = input_dim;
  w.encoding_dim = encoding_dim;
  w.phi1_w = Matrix(kEmbedWidth, input_dim);
  w.phi1_b = Matrix(1, kEmbedWidth);
  w.phi2_w = Matrix(kEmbedWidth, kEmbedWidth);
  w.phi2_b = Matrix(1, kEmbedWidth);
  w.rho1_w = Matrix(kScoreHidden1, encoding_dim + kEmbedWidth);
  w.rho1_b = Matrix(1, kScoreHidden1);
  w.rho2_w = Matrix(kScoreHidden2, kScoreHidden1);
  w.rho2_b = Matrix(1, kScoreHidden2);
  w.rho3_w = Matrix(1, kScoreHidden2);
  w.rho3_b = Matrix(1, 1);
  return w;
}

RankerWeights RankerWeights::init(std::size_t input_dim, std::size_t encoding_dim,
                                  std::uint64_t seed, double scale) {
  RankerWeights w = zeros(input_dim, encoding_dim);
  Rng rng(mix_seed(seed, "ranker-init"));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (Matrix* t : w.tensors()) {
    for (double& v : t->flat()) v = dist(rng);
  }
  return w;
}

std::array<Matrix*, RankerWeights::kTensorCount> RankerWeights::tensors() {
  return {&phi1_w, &phi1_b, &phi2_w, &phi2_b, &rho1_w, &rho1_b, &rho2_w, &rho2_b, &rho3_w, &rho3_b};
}

std::array<const Matrix*, RankerWeights::kTensorCount> RankerWeights::tensors() const {
  return {&phi1_w, &phi1_b, &phi2_w, &phi2_b, &rho1_w, &rho1_b, &rho2_w, &rho2_b, &rho3_w, &rho3_b};
}

std::vector<num::ParamRef> RankerWeights::params() {
  std::vector<num::ParamRef> out;
  const auto ts = tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) out.push_back({tensor_names()[i], ts[i]});
  return out;
}

void RankerWeights::validate() const {
  const RankerWeights shape = zeros(input_dim, encoding_dim);
  const auto mine = tensors();
  const auto ref = shape.tensors();
  for (std::size_t i = 0; i < kTensorCount; ++i) {
    require(mine[i]->same_shape(*ref[i]), std::string("ranker tensor '") + tensor_names()[i] +
                                              "' has shape " + num::shape_string(*mine[i]) +
                                              ", expected " + num::shape_string(*ref[i]));
    require(mine[i]->all_finite(), std::string("ranker tensor '") + tensor_names()[i] +
                                       "' is not finite");
  }
}

std::vector<Matrix> BoundRanker::grads(const Tape& tape) const {
  std::vector<Matrix> out;
  out.reserve(nodes.size());
  for (NodeId id : nodes) out.push_back(tape.grad(id));
  return out;
}

BoundRanker bind(Tape& tape, const RankerWeights& weights, bool trainable) {
  BoundRanker r;
  const auto ts = weights.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    r.nodes[i] = trainable ? tape.variable(*ts[i]) : tape.constant(*ts[i]);
  }
  return r;
}

NodeId meta_features(Tape& tape, const BoundRanker& r, NodeId samples) {
  require(tape.value(samples).rows() > 0, "meta_features: empty sample batch");
  const auto& n = r.nodes;
  const NodeId h1 = tape.linear(samples, n[0], n[1], num::Activation::relu);
  const NodeId h2 = tape.linear(h1, n[2], n[3], num::Activation::relu);
  return tape.mean_rows(h2);
}

NodeId score(Tape& tape, const BoundRanker& r, NodeId encodings, NodeId z) {
  const auto& n = r.nodes;
  const std::size_t rows = tape.value(encodings).rows();
  require(tape.value(z).rows() == 1 && tape.value(z).cols() == kEmbedWidth,
          "score: meta-features must be 1x" + std::to_string(kEmbedWidth));
  const NodeId input = tape.concat_cols(encodings, tape.repeat_rows(z, rows));
  const NodeId h1 = tape.linear(input, n[4], n[5], num::Activation::relu);
  const NodeId h2 = tape.linear(h1, n[6], n[7], num::Activation::relu);
  return tape.linear(h2, n[8], n[9]);
}

std::vector<double> meta_features(const RankerWeights& weights, const Matrix& samples) {
  require(samples.rows() > 0, "meta_features: empty sample batch");
  require(samples.cols() == weights.input_dim,
          "meta_features: samples have " + std::to_string(samples.cols()) +
              " features, ranker expects " + std::to_string(weights.input_dim));
  const Matrix h1 = num::forward_fc(samples, weights.phi1_w, weights.phi1_b, num::Activation::relu);
  const Matrix h2 = num::forward_fc(h1, weights.phi2_w, weights.phi2_b, num::Activation::relu);
  std::vector<double> z(kEmbedWidth, 0.0);
  for (std::size_t r = 0; r < h2.rows(); ++r) {
    for (std::size_t c = 0; c < kEmbedWidth; ++c) z[c] += h2(r, c);
  }
  for (double& v : z) v /= static_cast<double>(h2.rows());
  return z;
}

std::vector<double> score_batch(const RankerWeights& weights, const Matrix& encodings,
                                std::span<const double> z) {
  require(encodings.cols() == weights.encoding_dim,
          "score: encoding has " + std::to_string(encodings.cols()) + " entries, ranker expects " +
              std::to_string(weights.encoding_dim));
  require(z.size() == kEmbedWidth, "score: meta-features must have " +
                                       std::to_string(kEmbedWidth) + " entries");
  Matrix input(encodings.rows(), weights.encoding_dim + kEmbedWidth);
  for (std::size_t r = 0; r < encodings.rows(); ++r) {
    auto dst = input.row_span(r);
    const auto src = encodings.row_span(r);
    std::copy(src.begin(), src.end(), dst.begin());
    std::copy(z.begin(), z.end(), dst.begin() + static_cast<std::ptrdiff_t>(src.size()));
  }
  const Matrix h1 = num::forward_fc(input, weights.rho1_w, weights.rho1_b, num::Activation::relu);
  const Matrix h2 = num::forward_fc(h1, weights.rho2_w, weights.rho2_b, num::Activation::relu);
  const Matrix v = num::forward_fc(h2, weights.rho3_w, weights.rho3_b, num::Activation::identity);
  return v.data();
}

double score(const RankerWeights& weights, std::span<const double> u, std::span<const double> z) {
  return score_batch(weights, Matrix::row(u), z).front();
}

double score_with_gradient(const RankerWeights& weights, std::span<const double> u,
                           std::span<const double> z, std::vector<double>& grad_u) {
  require(u.size() == weights.encoding_dim, "score: encoding length mismatch");
  Tape tape;
  const BoundRanker r = bind(tape, weights, false);
  const NodeId un = tape.variable(Matrix::row(u));
  const NodeId zn = tape.constant(Matrix::row(z));
  const NodeId v = score(tape, r, un, zn);
  tape.backward(v);
  const auto g = tape.grad(un).flat();
  grad_u.assign(g.begin(), g.end());
  return tape.value(v)[0];
}

std::vector<double> task_meta_features(const RankerWeights& weights, const tasks::TaskDataset& task,
                                       std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) return meta_features(weights, tasks::whole_split(task, tasks::Split::train).x);
  const std::size_t n = std::min(batch_size, task.train.size());
  return meta_features(weights, tasks::sample_batch(task, tasks::Split::train, n, rng).x);
}

std::vector<double> task_centroid(const RankerWeights& weights, const tasks::TaskDataset& task,
                                  const MetaSampling& sampling, std::uint64_t seed) {
  require(!task.train.empty(), "task '" + task.task_id + "' has no training samples");
  Rng rng(seed);
  const std::size_t batches = std::max<std::size_t>(1, sampling.n_batches);
  std::vector<double> centroid(kEmbedWidth, 0.0);
  for (std::size_t b = 0; b < batches; ++b) {
    const auto z = task_meta_features(weights, task, sampling.batch_size, rng);
    for (std::size_t i = 0; i < kEmbedWidth; ++i) centroid[i] += z[i];
  }
  for (double& v : centroid) v /= static_cast<double>(batches);
  return centroid;
}

double task_embedding_distance(const RankerWeights& weights, const tasks::TaskDataset& a,
                               const tasks::TaskDataset& b, const MetaSampling& sampling,
                               std::uint64_t seed) {
  return std::sqrt(num::squared_distance(task_centroid(weights, a, sampling, seed),
                                         task_centroid(weights, b, sampling, seed)));
}

std::string to_json(const RankerWeights& weights) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto ts = weights.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    tensors.push_back({{"name", RankerWeights::tensor_names()[i]},
                       {"rows", ts[i]->rows()},
                       {"cols", ts[i]->cols()},
                       {"data", ts[i]->data()}});
  }
  nlohmann::json j = {{"version", 1},
                      {"input_dim", weights.input_dim},
                      {"encoding_dim", weights.encoding_dim},
                      {"tensors", tensors}};
  return j.dump();
}

RankerWeights from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  require(j.at("version").get<int>() == 1, "unsupported ranker checkpoint version");
  RankerWeights w = RankerWeights::zeros(j.at("input_dim").get<std::size_t>(),
                                         j.at("encoding_dim").get<std::size_t>());
  const auto& tensors = j.at("tensors");
  require(tensors.size() == RankerWeights::kTensorCount, "checkpoint tensor count mismatch");
  auto ts = w.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const auto& t = tensors[i];
    require(t.at("name").get<std::string>() == RankerWeights::tensor_names()[i],
            "checkpoint tensor order mismatch at '" + t.at("name").get<std::string>() + "'");
    *ts[i] = Matrix(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>(),
                    t.at("data").get<std::vector<double>>());
  }
  w.validate();
  return w;
}

void save_weights(const RankerWeights& weights, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << to_json(weights) << '\n';
  if (!out) throw Error("failed writing '" + path + "'");
}

RankerWeights load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace archrank::ranker
