#include "archrank/losses.hpp"

#include <algorithm>

#include "archrank/error.hpp"

namespace archrank::losses {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::l2: return "l2";
    case LossKind::linear_rank: return "linear";
    case LossKind::quadratic_rank: return "quadratic";
  }
  return "?";
}

LossKind loss_kind_from_string(std::string_view name) {
  if (name == "l2") return LossKind::l2;
  if (name == "linear" || name == "linear_rank") return LossKind::linear_rank;
  if (name == "quadratic" || name == "quadratic_rank") return LossKind::quadratic_rank;
  throw ContractViolation("unknown loss kind '" + std::string(name) +
                          "' (expected l2, linear or quadratic)");
}

void LossConfig::validate() const {
  require(margin > 0.0, "margin must be positive");
  require(gap >= 0.0, "gap must be non-negative");
}

std::vector<ScoredPair> filter_pairs(std::span<const double> scores,
                                     std::span<const double> performances, double gap) {
  require(scores.size() == performances.size(), "filter_pairs: score/performance count mismatch");
  std::vector<ScoredPair> pairs;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    for (std::size_t b = a + 1; b < scores.size(); ++b) {
      std::size_t hi = a, lo = b;
      if (performances[b] > performances[a]) std::swap(hi, lo);
      if (performances[hi] - performances[lo] > gap) {
        pairs.push_back({hi, lo, scores[hi], scores[lo], performances[hi], performances[lo]});
      }
    }
  }
  return pairs;
}

double linear_rank_loss(const ScoredPair& pair, double margin) {
  return std::max(0.0, margin - pair.score_gap());
}

double quadratic_rank_loss(const ScoredPair& pair, double margin) {
  require(margin > 0.0, "quadratic ranking loss needs a positive margin");
  const double h = std::max(0.0, margin - pair.score_gap());
  return h * h / margin;
}

double l2_loss(double score, double performance) {
  const double d = score - performance;
  return d * d;
}

std::vector<double> closed_form_grads(std::span<const double> scores,
                                      std::span<const ScoredPair> pairs, double margin,
                                      LossKind kind) {
  require(kind != LossKind::l2, "closed_form_grads covers the ranking losses only");
  require(margin > 0.0, "margin must be positive");
  std::vector<double> grad(scores.size(), 0.0);
  for (const auto& p : pairs) {
    const double d = scores[p.i] - scores[p.j];
    if (d >= margin) continue;
    const double w = kind == LossKind::linear_rank ? 1.0 : (2.0 / margin) * (margin - d);
    grad[p.i] -= w;
    grad[p.j] += w;
  }
  return grad;
}

BatchLoss batch_loss(num::Tape& tape, num::NodeId scores, std::span<const double> performances,
                     const LossConfig& cfg, Reduction reduction) {
  cfg.validate();
  const auto& v = tape.value(scores);
  require(v.cols() == 1 && v.rows() == performances.size(),
          "batch_loss: scores must be a column matching the performances");
  if (cfg.kind == LossKind::l2) {
    const num::NodeId target = tape.constant(
        num::Matrix(performances.size(), 1,
                    std::vector<double>(performances.begin(), performances.end())));
    const num::NodeId sq = tape.square(tape.sub(scores, target));
    return {reduction == Reduction::mean ? tape.mean(sq) : tape.sum(sq), performances.size()};
  }
  const auto pairs = filter_pairs(v.flat(), performances, cfg.gap);
  if (pairs.empty()) return {tape.constant(num::Matrix(1, 1)), 0};
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  idx.reserve(pairs.size());
  for (const auto& p : pairs) idx.emplace_back(p.i, p.j);
  num::NodeId per_pair = tape.hinge(tape.pair_differences(scores, idx), cfg.margin);
  if (cfg.kind == LossKind::quadratic_rank) {
    per_pair = tape.scale(tape.square(per_pair), 1.0 / cfg.margin);
  }
  return {reduction == Reduction::mean ? tape.mean(per_pair) : tape.sum(per_pair), pairs.size()};
}

}  // namespace archrank::losses
