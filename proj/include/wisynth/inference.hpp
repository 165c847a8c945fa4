#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wisynth/plrm_model.hpp"
#include "wisynth/random.hpp"

namespace wisynth {

/// Caps on the number of enumerated (Y, Ybar) configurations. Votes never
/// add to the count: given (Y, Ybar) the ILF votes are independent, so their
/// sums are taken per ILF in closed form.
struct EnumerationBudget {
  std::size_t conditional = std::size_t{1} << 21;
  std::size_t joint = std::size_t{1} << 23;
};

class BudgetExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Number of (Y, Ybar) configurations of a model.
std::size_t latent_state_count(const FactorModel& model) noexcept;

/// Distribution over (Y, Ybar); entry y * 2^L + bits, bit i = latent i.
struct JointTable {
  int y_cardinality = 0;
  int latent_count = 0;
  std::vector<double> prob;

  std::size_t index(int y, std::uint32_t bits) const noexcept {
    return (static_cast<std::size_t>(y) << latent_count) | bits;
  }
  std::vector<double> y_marginal() const;
};

/// P(Y, Ybar | votes). Throws BudgetExceeded past budget.conditional.
JointTable exact_posterior(const FactorModel& model, std::span<const LabelId> votes,
                           const EnumerationBudget& budget = {});

/// P(Y, Ybar) with the votes summed out.
JointTable exact_latent_marginal(const FactorModel& model, const EnumerationBudget& budget = {});

double exact_log_partition(const FactorModel& model, const EnumerationBudget& budget = {});

/// log of the unnormalized mass of the votes, summed over (Y, Ybar).
double exact_log_evidence(const FactorModel& model, std::span<const LabelId> votes,
                          const EnumerationBudget& budget = {});

/// log P(votes).
double exact_log_marginal(const FactorModel& model, std::span<const LabelId> votes,
                          const EnumerationBudget& budget = {});

/// E[Phi] under the joint.
std::vector<double> exact_joint_expectation(const FactorModel& model, const EnumerationBudget& budget = {});

/// E[Phi | votes].
std::vector<double> exact_conditional_expectation(const FactorModel& model, std::span<const LabelId> votes,
                                                  const EnumerationBudget& budget = {});

namespace detail {
class StateScorer;
}

/// Exact draws from the joint or from P(Y, Ybar | votes). Caches the
/// enumerated joint for the model's theta at construction time.
class ExactSampler {
 public:
  explicit ExactSampler(const FactorModel& model, const EnumerationBudget& budget = {});
  ~ExactSampler();
  ExactSampler(ExactSampler&&) noexcept;
  ExactSampler& operator=(ExactSampler&&) noexcept;

  Assignment sample_joint(Rng& rng) const;
  /// Draw from P(Ybar, votes | Y = y).
  Assignment sample_given_y(int y, Rng& rng) const;
  Assignment sample_conditional(std::span<const LabelId> votes, Rng& rng) const;

 private:
  void fill_latent(Assignment& a, std::size_t state) const;
  Assignment draw_votes(std::size_t state, Rng& rng) const;

  const FactorModel* model_;
  EnumerationBudget budget_;
  std::unique_ptr<detail::StateScorer> scorer_;
  JointTable joint_;
};

// ---------------------------------------------------------------------------
// Gibbs sampling

struct Site {
  enum class Kind : std::uint8_t { y, latent, vote } kind = Kind::y;
  int index = 0;
};

/// Full conditional of one variable given the rest of `a`, over its domain:
/// Y values, {0, 1}, or the ILF domain in ilf_domain() order.
std::vector<double> full_conditional(const FactorModel& model, const Assignment& a, Site site);

/// Systematic-scan Gibbs chain: Y, then latent bits ascending, then the
/// unclamped votes ascending.
class GibbsChain {
 public:
  GibbsChain(const FactorModel& model, std::optional<std::vector<LabelId>> clamp, std::uint64_t seed);
  GibbsChain(const FactorModel& model, std::optional<std::vector<LabelId>> clamp, Assignment init, Rng rng);

  void sweep();
  const Assignment& state() const noexcept { return state_; }
  Assignment& state() noexcept { return state_; }
  Rng& rng() noexcept { return rng_; }
  bool clamped() const noexcept { return clamped_; }

 private:
  void resample_y();
  void resample_latent(std::size_t i);
  void resample_vote(std::size_t j);

  const FactorModel* model_;
  bool clamped_;
  Assignment state_;
  Rng rng_;
  std::vector<double> scratch_;
};

/// One assignment per sweep after `burn_in`. Requires sweeps > burn_in.
std::vector<Assignment> gibbs_sample(const FactorModel& model, std::optional<std::vector<LabelId>> clamp,
                                     int sweeps, int burn_in, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Posterior labels for a dataset

enum class InferenceMethod : std::uint8_t { automatic, exact, gibbs };

InferenceMethod inference_method_from_string(const std::string& s);

struct GibbsParams {
  int sweeps = 2000;
  int burn_in = 200;
  std::uint64_t seed = 0;
};

struct PosteriorLabels {
  // Per point, probabilities over desired labels (graph.desired() order)
  // followed by the unknown class when the model has one.
  std::vector<std::vector<double>> probs;
  bool has_unknown = false;
  std::string provenance;
};

/// Worker count from WISYNTH_THREADS, else the hardware concurrency.
unsigned default_threads();

/// Rows with identical votes are computed once. Gibbs rows draw from a
/// stream keyed by the first row index carrying those votes, so results do
/// not depend on the worker count.
PosteriorLabels posterior_labels(const FactorModel& model, const IlfOutputMatrix& outputs,
                                 InferenceMethod method = InferenceMethod::automatic, const GibbsParams& params = {},
                                 const EnumerationBudget& budget = {}, unsigned threads = 0);

}  // namespace wisynth
