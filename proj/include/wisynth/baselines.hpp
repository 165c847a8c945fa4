#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wisynth/ilf.hpp"
#include "wisynth/label_graph.hpp"

namespace wisynth {

/// Prediction marker for points without any usable vote.
inline constexpr int kNoLabel = -1;

/// Index of the largest entry, lowest index on ties. kNoLabel when every
/// entry is zero and `zero_is_empty` is set, or when `v` is empty.
int argmax_lowest(std::span<const double> v, bool zero_is_empty = false);

// ---------------------------------------------------------------------------
// Majority voting over relation-replaced votes

struct WeightFlag {
  std::size_t point = 0;
  std::size_t ilf = 0;
  LabelId vote = kAbstain;
};

struct VoteTally {
  // Per point, accumulated weight for each desired label (graph.desired() order).
  std::vector<std::vector<double>> weights;
  // Desired index per point, or kNoLabel.
  std::vector<int> predicted;
  // Votes whose weight denominator was empty while a non-ancestor received 0.
  std::vector<WeightFlag> flags;
};

VoteTally lr_mv(const LabelGraph& g, const IlfOutputMatrix& outputs);

enum class WeightRule : std::uint8_t {
  // Ancestors of the vote get 1; the rest split 1 / |non-ancestors|.
  non_ancestor,
  // Ancestors get 1; the rest get 1 / |{y in N : relation(y, vote) != subsumed}|.
  literal,
};

WeightRule weight_rule_from_string(const std::string& s);

/// Weights a single vote assigns to each desired label. `empty_denominator`
/// is set when some non-ancestor receives weight 0 for lack of a denominator.
std::vector<double> w_lr_mv_vote_weights(const LabelGraph& g, LabelId vote, WeightRule rule,
                                         bool* empty_denominator = nullptr);

VoteTally w_lr_mv(const LabelGraph& g, const IlfOutputMatrix& outputs, WeightRule rule = WeightRule::non_ancestor);

// ---------------------------------------------------------------------------
// Direct attribute prediction over consistent seen-label assignments

using BitVector = std::vector<std::uint8_t>;

/// Bit vectors over graph.seen() with no exclusive pair co-active and every
/// active label's subsumers active, in ascending binary order (bit i = seen i).
std::vector<BitVector> enumerate_consistent_assignments(const LabelGraph& g, std::size_t cap = 20);

/// Bit m set iff no label active in S[m] is exclusive to desired label y.
BitVector dap_label_attributes(const LabelGraph& g, std::span<const BitVector> S, LabelId y);

struct PointAttributes {
  BitVector bits;
  bool conflict = false;  // votes closed under subsumers match no assignment
};

/// Bit m set iff the seen labels voted on the row, closed under their seen
/// subsumers, are exactly the active set of S[m].
PointAttributes dap_point_attributes(const LabelGraph& g, std::span<const BitVector> S, std::span<const LabelId> row);

enum class DapRule : std::uint8_t {
  posterior_over_prior,  // prod_m p(a_m = a^c_m | x) / p(a_m = a^c_m)
  literal,               // prod_m p(a^c_m | x) / p(a^c_m | x), constant in c
};

inline constexpr double kPriorFloor = 1e-6;

/// Desired index maximizing the rule's score; lowest index on ties.
/// attr_prob[m] = p(a_m = 1 | x); priors[m] = p(a_m = 1).
int dap_predict(std::span<const double> attr_prob, std::span<const BitVector> label_attrs,
                std::span<const double> priors, DapRule rule = DapRule::posterior_over_prior);

struct DapResult {
  std::vector<BitVector> assignments;
  std::vector<BitVector> label_attrs;
  std::vector<double> priors;
  std::vector<int> predicted;
  std::vector<std::size_t> conflicts;
};

/// Runs the whole baseline. Without features, attribute posteriors are the
/// point attributes clipped to [clip, 1 - clip]; with features, one logistic
/// model per attribute is fit to the non-conflicting points. Priors are the
/// mean attribute posterior over the non-conflicting points.
DapResult dap(const LabelGraph& g, const IlfOutputMatrix& outputs,
              const std::vector<std::vector<double>>* features = nullptr, DapRule rule = DapRule::posterior_over_prior,
              double clip = 0.05);

// ---------------------------------------------------------------------------
// Noise-aware linear end model

using Matrix = std::vector<std::vector<double>>;

struct LinearConfig {
  double learning_rate = 0.5;
  int iterations = 500;
  double l2 = 0.0;
};

/// Softmax regression with a bias column.
struct LinearClassifier {
  int classes = 0;
  int dims = 0;
  std::vector<double> weights;  // classes x (dims + 1), bias last

  std::vector<double> predict_proba(std::span<const double> x) const;
  int predict(std::span<const double> x) const;
};

/// (1/m) sum_i E_{y ~ targets_i} [-log softmax(W x_i)_y] + l2/2 |W|^2 (bias excluded).
double noise_aware_loss(const LinearClassifier& clf, const Matrix& features, const Matrix& targets, double l2 = 0.0);
std::vector<double> noise_aware_gradient(const LinearClassifier& clf, const Matrix& features, const Matrix& targets,
                                         double l2 = 0.0);

/// Full-batch gradient descent from W = 0. Each target row is a distribution
/// over the classes; rows of all zeros carry no weight.
LinearClassifier train_noise_aware_linear(const Matrix& features, const Matrix& targets, const LinearConfig& cfg = {});

/// Drops the unknown column (when present) and renormalizes; rows with no
/// desired mass become all zeros.
Matrix desired_targets(const std::vector<std::vector<double>>& probs, bool has_unknown);

}  // namespace wisynth
