#include "wisynth/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "wisynth/random.hpp"

namespace wisynth {

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "auto") return SamplerKind::automatic;
  if (s == "exact") return SamplerKind::exact;
  if (s == "gibbs") return SamplerKind::gibbs;
  throw std::invalid_argument("unknown sampler '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (!(positivity_floor >= 0.0)) throw std::invalid_argument("positivity floor must be >= 0");
  if (burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  if (unconditional_sweeps < 1) throw std::invalid_argument("unconditional_sweeps must be >= 1");
  if (!std::isfinite(step_size)) throw std::invalid_argument("step size must be finite");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(max_abs_theta > 0.0)) throw std::invalid_argument("divergence bound must be > 0");
  if (!(average_fraction >= 0.0 && average_fraction <= 1.0)) throw std::invalid_argument("average_fraction must lie in [0, 1]");
}

std::vector<double> project_positive(std::span<const double> theta, double eps) {
  if (eps < 0.0) throw std::invalid_argument("project_positive needs eps >= 0");
  std::vector<double> out(theta.begin(), theta.end());
  for (double& t : out) t = std::max(t, eps);
  return out;
}

double exact_nll(const FactorModel& model, const IlfOutputMatrix& outputs, const EnumerationBudget& budget) {
  if (outputs.rows() == 0) return 0.0;
  std::map<std::vector<LabelId>, std::size_t> counts;
  for (std::size_t i = 0; i < outputs.rows(); ++i) {
    auto r = outputs.row(i);
    ++counts[std::vector<LabelId>(r.begin(), r.end())];
  }
  const double log_z = exact_log_partition(model, budget);
  double total = 0.0;
  for (const auto& [row, c] : counts)
    total += static_cast<double>(c) * (log_z - exact_log_evidence(model, row, budget));
  return total / static_cast<double>(outputs.rows());
}

std::vector<double> exact_nll_gradient(const FactorModel& model, std::span<const LabelId> votes,
                                       const EnumerationBudget& budget) {
  std::vector<double> g = exact_joint_expectation(model, budget);
  const std::vector<double> c = exact_conditional_expectation(model, votes, budget);
  for (std::size_t r = 0; r < g.size(); ++r) g[r] -= c[r];
  return g;
}

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Draws the (unconditional, conditional) pair for one update.
class PairSampler {
 public:
  PairSampler(FactorModel& model, const TrainConfig& cfg, bool exact, Rng& rng)
      : model_(model), cfg_(cfg), exact_(exact), rng_(rng) {
    if (!exact_) {
      chain_.emplace(model_, std::nullopt, rng_());
      for (int s = 0; s < cfg_.burn_in; ++s) chain_->sweep();
    }
  }

  std::pair<Assignment, Assignment> draw(std::span<const LabelId> votes) {
    if (exact_) {
      const ExactSampler sampler(model_, EnumerationBudget{std::size_t(-1), std::size_t(-1)});
      Assignment u = sampler.sample_joint(rng_);
      Assignment c = sampler.sample_conditional(votes, rng_);
      return {std::move(u), std::move(c)};
    }
    if (!cfg_.persistent) {
      chain_.emplace(model_, std::nullopt, rng_());
      for (int s = 0; s < cfg_.burn_in; ++s) chain_->sweep();
    }
    for (int s = 0; s < cfg_.unconditional_sweeps; ++s) chain_->sweep();
    Assignment u = chain_->state();
    GibbsChain cond(model_, std::vector<LabelId>(votes.begin(), votes.end()), u, Rng(rng_()));
    for (int s = 0; s < std::max(1, cfg_.burn_in); ++s) cond.sweep();
    return {std::move(u), cond.state()};
  }

 private:
  FactorModel& model_;
  const TrainConfig& cfg_;
  bool exact_;
  Rng& rng_;
  std::optional<GibbsChain> chain_;
};

}  // namespace

FitResult fit(const FactorModel& model, const IlfOutputMatrix& outputs, const TrainConfig& cfg) {
  cfg.validate();
  validate_outputs(model.ilfs(), outputs);
  if (outputs.rows() == 0) throw std::invalid_argument("cannot fit on an empty output matrix");
  if (outputs.cols() != model.ilf_count()) throw std::invalid_argument("outputs do not match the model's ILFs");

  FitResult result{model, {}};
  FactorModel& work = result.model;
  work.set_theta(std::vector<double>(work.size(), cfg.theta_init));

  const std::size_t m = outputs.rows();
  const double eta = cfg.step_size > 0.0 ? cfg.step_size : 1.0 / static_cast<double>(m);
  const std::size_t states = latent_state_count(work);
  bool exact = cfg.sampler == SamplerKind::exact;
  if (cfg.sampler == SamplerKind::automatic) exact = states <= cfg.exact_sampling_states;
  const EnumerationBudget budget;
  const bool can_log = cfg.log_exact_nll && states <= budget.conditional;

  std::string sampler_name;
  if (exact) {
    sampler_name = "exact";
  } else {
    std::ostringstream os;
    os << "gibbs(burn_in=" << cfg.burn_in << ",unconditional_sweeps=" << cfg.unconditional_sweeps
       << (cfg.persistent ? ",persistent" : "") << ")";
    sampler_name = os.str();
  }

  Rng rng = make_rng(cfg.seed, 0x7472);
  PairSampler sampler(work, cfg, exact, rng);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& deps = work.dependencies();
  const int averaged_epochs = static_cast<int>(std::ceil(cfg.average_fraction * cfg.epochs));
  std::vector<double> sum(work.size(), 0.0);
  std::size_t summed = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t i : order) {
      const auto votes = outputs.row(i);
      const auto [u, c] = sampler.draw(votes);
      std::vector<double>& theta = work.mutable_theta();
      const double dir = cfg.sign == UpdateSign::descent ? 1.0 : -1.0;
      for (std::size_t r = 0; r < deps.size(); ++r) {
        const int diff = factor_value(deps[r], c) - factor_value(deps[r], u);
        double t = theta[r];
        if (cfg.weight_decay > 0.0) t -= eta * cfg.weight_decay * t;
        if (diff != 0) t += eta * dir * diff;
        if (cfg.positivity_floor > 0.0) t = std::max(t, cfg.positivity_floor);
        theta[r] = t;
        if (!(std::abs(t) <= cfg.max_abs_theta))
          throw TrainingDiverged("theta entry " + std::to_string(r) + " reached " + std::to_string(t) +
                                 " in epoch " + std::to_string(epoch) + ", beyond the divergence bound");
      }
      if (epoch > cfg.epochs - averaged_epochs) {
        for (std::size_t r = 0; r < sum.size(); ++r) sum[r] += theta[r];
        ++summed;
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    if (can_log) entry.exact_nll = exact_nll(work, outputs, budget);
    entry.theta_norm = l2_norm(work.theta());
    entry.step_size = eta;
    entry.sampler = sampler_name;
    result.log.push_back(std::move(entry));
  }
  if (summed > 0) {
    for (double& v : sum) v /= static_cast<double>(summed);
    work.set_theta(std::move(sum));
  }
  return result;
}

std::vector<double> mean_update_direction(const FactorModel& model, const IlfOutputMatrix& outputs,
                                          const TrainConfig& cfg, std::size_t pairs) {
  cfg.validate();
  validate_outputs(model.ilfs(), outputs);
  if (outputs.rows() == 0 || pairs == 0) throw std::invalid_argument("need at least one row and one pair");
  FactorModel work = model;
  bool exact = cfg.sampler == SamplerKind::exact;
  if (cfg.sampler == SamplerKind::automatic) exact = latent_state_count(work) <= cfg.exact_sampling_states;
  Rng rng = make_rng(cfg.seed, 0x7472);
  PairSampler sampler(work, cfg, exact, rng);
  std::vector<std::size_t> order(outputs.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> sum(work.size(), 0.0);
  const auto& deps = work.dependencies();
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t pos = k % order.size();
    if (pos == 0)
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    const auto [u, c] = sampler.draw(outputs.row(order[pos]));
    for (std::size_t r = 0; r < deps.size(); ++r) sum[r] += factor_value(deps[r], c) - factor_value(deps[r], u);
  }
  for (double& v : sum) v /= static_cast<double>(pairs);
  return sum;
}

}  // namespace wisynth
