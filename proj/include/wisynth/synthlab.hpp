#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wisynth/ilf.hpp"
#include "wisynth/inference.hpp"
#include "wisynth/label_graph.hpp"
#include "wisynth/plrm_model.hpp"

namespace wisynth {

/// How votes and gold labels are drawn once the taxonomy and ILF spaces are
/// fixed. `plrm` samples a PLRM (no unknown class) whose accuracy weights are
/// calibrated to the target ILF accuracies; `taxonomy` uses the direct
/// latent-node process described at generate_task.
enum class SimProcess { plrm, taxonomy };

const char* to_string(SimProcess p) noexcept;
SimProcess sim_process_from_string(const std::string& s);

/// Parameters of a synthetic task. Seen labels come in three kinds:
/// groups (supersets of some desired labels, or of parts of them), parts
/// (strict subsets of one desired label) and distractors (disjoint from every
/// desired label). Groups nest whenever their members do. The fractions set
/// the mix of subsumed, subsuming, overlapping and exclusive relations.
struct SimSpec {
  int desired = 4;
  int seen = 8;
  int ilfs = 5;
  int points = 1000;
  double acc_min = 0.55;
  double acc_max = 0.95;
  std::vector<double> accuracies;  // overrides the range when non-empty
  double abstain = 0.1;
  double group_frac = 0.5;
  double part_frac = 0.25;  // the rest are distractors
  // Chance that a group takes one part of a desired label instead of the label.
  double partial_member_prob = 0.3;
  int space_min = 2;
  int space_max = 4;
  // Plants two desired labels with identical relations plus one extra group
  // (and an ILF emitting it) containing only the first of them.
  bool plant_pair = false;
  // Plants the pair without its distinguishing label; implies plant_pair.
  bool force_indistinct_pair = false;
  SimProcess process = SimProcess::plrm;
  // plrm process: gold is uniform over the desired labels and the rest of
  // the point is drawn from the planted PLRM given Y. Off, gold follows the
  // PLRM's own class marginal, which the graph structure can skew heavily.
  // The PLRM has no class-prior factor, so fits degrade when this is on.
  bool balanced_classes = false;
  double relation_weight = 3.0;         // plrm process: every relation factor
  double pseudo_accuracy_weight = 0.5;  // plrm process
  int feature_dims = 0;
  double separation = 3.0;
  int max_retries = 500;
  std::uint64_t seed = 0;

  void validate() const;
};

class SpecUnsatisfiable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SimTask {
  LabelGraph graph;
  std::vector<IlfSpec> ilfs;
  std::vector<int> gold;  // desired index per point
  IlfOutputMatrix outputs;
  std::vector<std::vector<double>> features;  // empty unless feature_dims > 0
  std::vector<double> accuracies;             // per ILF, realized
  std::vector<double> theta;                  // planted weights (plrm process, full graph)
};

/// Taxonomy process, per point: gold class uniform over desired labels, then a latent node
/// uniform over the gold label's descendants (itself included). The true seen
/// labels are the seen ancestors of that node. ILF j abstains with
/// probability `abstain`; otherwise with its accuracy it emits a uniform true
/// seen label from its space (a label in N(gold, space) when none is true,
/// abstaining when that is empty too), else a uniform label outside
/// N(gold, space) (a compatible one when none exists).
/// With equal seeds, the planted and forced variants share gold labels,
/// features and every ILF column except the distinguishing one.
SimTask generate_task(const SimSpec& spec);

/// Per ILF, P(the vote is a true seen label | the ILF votes) under the joint,
/// or with `balanced` under the joint reweighted to a uniform Y.
std::vector<double> ilf_accuracies(const FactorModel& model, const EnumerationBudget& budget = {},
                                   bool balanced = false);

/// Sets each ILF's accuracy weights (one shared value per ILF, in [0, 12]) by
/// bisection so ilf_accuracies approaches `targets`; targets outside the
/// reachable range end at the nearer bound.
void calibrate_accuracies(FactorModel& model, std::span<const double> targets, int rounds = 3,
                          bool balanced = false);

struct ModelSample {
  IlfOutputMatrix outputs;
  std::vector<int> y;  // latent class per draw; the unknown index when drawn
};

/// m independent draws from the model's exact joint.
ModelSample sample_from_model(const FactorModel& model, std::size_t m, std::uint64_t seed);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  std::size_t predicted = 0;
};

struct Metrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;  // over classes present in gold or predictions
  std::vector<ClassMetrics> per_class;
};

/// Hard labels per point; values outside [0, classes) count as wrong.
Metrics evaluate(std::span<const int> predicted, std::span<const int> gold, int classes);

/// Argmax (lowest index on ties) of each distribution; an unknown column, when
/// present, is the last entry and counts as wrong.
std::vector<int> hard_labels(const std::vector<std::vector<double>>& probs);

Metrics evaluate(const std::vector<std::vector<double>>& probs, std::span<const int> gold, int classes);

}  // namespace wisynth
