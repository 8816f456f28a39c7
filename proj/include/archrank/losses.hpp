#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "archrank/tape.hpp"

namespace archrank::losses {

enum class LossKind { l2, linear_rank, quadratic_rank };

std::string_view to_string(LossKind kind);
// Accepts "l2", "linear", "quadratic" and the long names.
LossKind loss_kind_from_string(std::string_view name);

struct LossConfig {
  LossKind kind = LossKind::linear_rank;
  double margin = 0.3;
  double gap = 0.01;

  void validate() const;
};

// Two records of one task, oriented so that performance_i > performance_j.
struct ScoredPair {
  std::size_t i = 0;
  std::size_t j = 0;
  double score_i = 0.0;
  double score_j = 0.0;
  double perf_i = 0.0;
  double perf_j = 0.0;

  double score_gap() const { return score_i - score_j; }
};

// Every unordered pair once, oriented by performance, kept iff
// perf_i - perf_j > gap (strict).
std::vector<ScoredPair> filter_pairs(std::span<const double> scores,
                                     std::span<const double> performances, double gap);

// max(0, m - (v_i - v_j))
double linear_rank_loss(const ScoredPair& pair, double margin);
// max(0, m - (v_i - v_j))^2 / m
double quadratic_rank_loss(const ScoredPair& pair, double margin);
// (v - p)^2
double l2_loss(double score, double performance);

// Per-score gradient of the summed pair loss, from the closed forms
//   linear:    dL/dv_i = -1,               dL/dv_j = +1
//   quadratic: dQ/dv_i = -(2/m)(m - d),    dQ/dv_j = +(2/m)(m - d)
// accumulated over pairs with d = v_i - v_j < m.
std::vector<double> closed_form_grads(std::span<const double> scores,
                                      std::span<const ScoredPair> pairs, double margin,
                                      LossKind kind);

enum class Reduction { mean, sum };

struct BatchLoss {
  num::NodeId loss;  // 1x1 node
  std::size_t n_terms = 0;  // pairs for ranking losses, records for l2
};

// Builds the batch loss over an n x 1 score node. Ranking kinds use the
// gap-filtered pairs of `performances`; a batch with no pairs yields a
// constant zero loss.
BatchLoss batch_loss(num::Tape& tape, num::NodeId scores, std::span<const double> performances,
                     const LossConfig& cfg, Reduction reduction = Reduction::mean);

}  // namespace archrank::losses
