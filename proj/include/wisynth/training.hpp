#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wisynth/inference.hpp"
#include "wisynth/plrm_model.hpp"

namespace wisynth {

enum class UpdateSign : std::uint8_t {
  descent,  // theta += eta * (Phi(conditional) - Phi(unconditional))
  printed,  // theta += eta * (Phi(unconditional) - Phi(conditional)); ascends the NLL
};

enum class SamplerKind : std::uint8_t { automatic, exact, gibbs };

SamplerKind sampler_kind_from_string(const std::string& s);

struct TrainConfig {
  double step_size = 0.0;  // <= 0 selects 1 / m
  int epochs = 10;
  int burn_in = 10;              // conditional-chain sweeps per update (Gibbs)
  int unconditional_sweeps = 1;  // persistent-chain sweeps per update (Gibbs)
  bool persistent = true;        // keep one unconditional chain across updates
  double positivity_floor = 1e-6;  // 0 disables the projection
  double theta_init = 2.0;
  double weight_decay = 0.0;
  double max_abs_theta = 1e3;
  UpdateSign sign = UpdateSign::descent;
  SamplerKind sampler = SamplerKind::automatic;
  // Automatic sampling enumerates exactly up to this many (Y, Ybar) states.
  std::size_t exact_sampling_states = 4096;
  bool log_exact_nll = true;
  // The result is the mean iterate over this final share of the epochs
  // (Polyak-Ruppert averaging); 0 returns the last iterate.
  double average_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  std::optional<double> exact_nll;  // mean per point
  double theta_norm = 0.0;          // Euclidean
  double step_size = 0.0;
  std::string sampler;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitResult {
  FactorModel model;
  std::vector<EpochLog> log;
};

/// Stochastic gradient training of the negative log marginal likelihood.
/// Each update pairs one unconditional draw with one draw conditioned on the
/// example's votes. Examples are visited in a per-epoch shuffled order.
/// The input model's theta is replaced by cfg.theta_init before training.
FitResult fit(const FactorModel& model, const IlfOutputMatrix& outputs, const TrainConfig& cfg);

/// Mean negative log marginal likelihood over the rows, by enumeration.
double exact_nll(const FactorModel& model, const IlfOutputMatrix& outputs, const EnumerationBudget& budget = {});

/// E[Phi] - E[Phi | votes]: gradient of -log P(votes) with respect to theta.
std::vector<double> exact_nll_gradient(const FactorModel& model, std::span<const LabelId> votes,
                                       const EnumerationBudget& budget = {});

/// Mean of Phi(conditional) - Phi(unconditional) over `pairs` draws from the
/// same pair sampler fit() uses, with theta held fixed. Rows are visited in
/// shuffled passes. In expectation this is the descent direction
/// -mean_i exact_nll_gradient(votes_i).
std::vector<double> mean_update_direction(const FactorModel& model, const IlfOutputMatrix& outputs,
                                          const TrainConfig& cfg, std::size_t pairs);

/// Elementwise max(theta_r, eps).
std::vector<double> project_positive(std::span<const double> theta, double eps);

}  // namespace wisynth
