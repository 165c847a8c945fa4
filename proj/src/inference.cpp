#include "wisynth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace wisynth {

std::size_t latent_state_count(const FactorModel& model) noexcept {
  if (model.latent_count() >= 62) return std::numeric_limits<std::size_t>::max();
  return static_cast<std::size_t>(model.y_cardinality()) << model.latent_count();
}

std::vector<double> JointTable::y_marginal() const {
  std::vector<double> out(static_cast<std::size_t>(y_cardinality), 0.0);
  const std::size_t per_y = std::size_t{1} << latent_count;
  for (int y = 0; y < y_cardinality; ++y) {
    double s = 0.0;
    for (std::size_t b = 0; b < per_y; ++b) s += prob[index(y, static_cast<std::uint32_t>(b))];
    out[y] = s;
  }
  return out;
}

namespace detail {

/// Evaluates the model on (Y, Ybar) states for a fixed theta. Relation
/// factors only see (Y, Ybar); each vote-touching factor is indexed by the
/// ILF and the vote value that activates it.
class StateScorer {
 public:
  explicit StateScorer(const FactorModel& model) : model_(model), theta_(model.theta()) {
    const auto& deps = model.dependencies();
    by_vote_.resize(model.ilf_count());
    for (std::size_t j = 0; j < model.ilf_count(); ++j) by_vote_[j].resize(model.ilf_domain(j).size());
    for (std::size_t r = 0; r < deps.size(); ++r) {
      const Dependency& d = deps[r];
      if (d.family == Family::seen_seen || d.family == Family::desired_seen) {
        structural_.push_back(static_cast<int>(r));
      } else {
        by_vote_[d.ilf][value_index(d.ilf, d.label)].push_back(static_cast<int>(r));
      }
    }
  }

  std::size_t value_index(std::size_t j, LabelId v) const {
    const auto& dom = model_.ilf_domain(j);
    const auto it = std::find(dom.begin(), dom.end(), v);
    if (it == dom.end())
      throw std::invalid_argument("vote " + std::to_string(v) + " outside the domain of ILF " +
                                  std::to_string(model_.ilfs()[j].ilf_id));
    return static_cast<std::size_t>(it - dom.begin());
  }

  std::vector<std::size_t> vote_indices(std::span<const LabelId> votes) const {
    if (votes.size() != model_.ilf_count())
      throw std::invalid_argument("vote row has " + std::to_string(votes.size()) + " entries, model has " +
                                  std::to_string(model_.ilf_count()) + " ILFs");
    std::vector<std::size_t> idx(votes.size());
    for (std::size_t j = 0; j < votes.size(); ++j) idx[j] = value_index(j, votes[j]);
    return idx;
  }

  int structural_value(const Dependency& d, int y, std::uint32_t bits) const noexcept {
    const bool right = (bits >> d.seen) & 1U;
    if (d.family == Family::seen_seen) return relation_factor(d.relation, right, (bits >> d.seen2) & 1U);
    return relation_factor(d.relation, y == d.desired, right);
  }

  bool vote_factor_active(const Dependency& d, int y, std::uint32_t bits) const noexcept {
    return d.family == Family::pseudo_accuracy ? y == d.desired : ((bits >> d.seen) & 1U) != 0;
  }

  double structural_score(int y, std::uint32_t bits) const noexcept {
    double s = 0.0;
    for (int r : structural_) {
      const int v = structural_value(model_.dependencies()[r], y, bits);
      if (v != 0) s += theta_[r] * v;
    }
    return s;
  }

  double vote_score(std::size_t j, std::size_t value, int y, std::uint32_t bits) const noexcept {
    double s = 0.0;
    for (int r : by_vote_[j][value])
      if (vote_factor_active(model_.dependencies()[r], y, bits)) s += theta_[r];
    return s;
  }

  /// Log weights of every value of ILF j given (y, bits).
  void vote_logits(std::size_t j, int y, std::uint32_t bits, std::vector<double>& out) const {
    out.resize(by_vote_[j].size());
    for (std::size_t v = 0; v < out.size(); ++v) out[v] = vote_score(j, v, y, bits);
  }

  const std::vector<int>& structural() const noexcept { return structural_; }
  const std::vector<int>& by_vote(std::size_t j, std::size_t v) const { return by_vote_[j][v]; }

 private:
  const FactorModel& model_;
  std::span<const double> theta_;
  std::vector<int> structural_;
  std::vector<std::vector<std::vector<int>>> by_vote_;
};

}  // namespace detail

namespace {

using detail::StateScorer;

void check_budget(const FactorModel& model, std::size_t cap, const char* what) {
  const std::size_t n = latent_state_count(model);
  if (n > cap) {
    std::ostringstream os;
    os << what << " enumeration needs " << n << " (Y, Ybar) states, budget is " << cap;
    throw BudgetExceeded(os.str());
  }
}

JointTable make_table(const FactorModel& model) {
  JointTable t;
  t.y_cardinality = model.y_cardinality();
  t.latent_count = model.latent_count();
  t.prob.assign(latent_state_count(model), 0.0);
  return t;
}

void normalize_from_logs(std::vector<double>& v) { softmax_inplace(v); }

}  // namespace

JointTable exact_posterior(const FactorModel& model, std::span<const LabelId> votes, const EnumerationBudget& budget) {
  check_budget(model, budget.conditional, "conditional");
  const StateScorer sc(model);
  const auto idx = sc.vote_indices(votes);
  JointTable t = make_table(model);
  const std::uint32_t per_y = 1U << model.latent_count();
  for (int y = 0; y < t.y_cardinality; ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      double s = sc.structural_score(y, b);
      for (std::size_t j = 0; j < idx.size(); ++j) s += sc.vote_score(j, idx[j], y, b);
      t.prob[t.index(y, b)] = s;
    }
  normalize_from_logs(t.prob);
  return t;
}

namespace {

/// Unnormalized log P(Y, Ybar) with the votes summed out.
std::vector<double> latent_logs(const FactorModel& model, const StateScorer& sc) {
  const std::uint32_t per_y = 1U << model.latent_count();
  std::vector<double> logs(latent_state_count(model));
  std::vector<double> scratch;
  for (int y = 0; y < model.y_cardinality(); ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      double s = sc.structural_score(y, b);
      for (std::size_t j = 0; j < model.ilf_count(); ++j) {
        sc.vote_logits(j, y, b, scratch);
        s += log_sum_exp(scratch);
      }
      logs[(static_cast<std::size_t>(y) << model.latent_count()) | b] = s;
    }
  return logs;
}

}  // namespace

JointTable exact_latent_marginal(const FactorModel& model, const EnumerationBudget& budget) {
  check_budget(model, budget.joint, "joint");
  const StateScorer sc(model);
  JointTable t = make_table(model);
  t.prob = latent_logs(model, sc);
  normalize_from_logs(t.prob);
  return t;
}

double exact_log_partition(const FactorModel& model, const EnumerationBudget& budget) {
  check_budget(model, budget.joint, "joint");
  const StateScorer sc(model);
  return log_sum_exp(latent_logs(model, sc));
}

double exact_log_evidence(const FactorModel& model, std::span<const LabelId> votes, const EnumerationBudget& budget) {
  check_budget(model, budget.conditional, "conditional");
  const StateScorer sc(model);
  const auto idx = sc.vote_indices(votes);
  const std::uint32_t per_y = 1U << model.latent_count();
  std::vector<double> logs;
  logs.reserve(latent_state_count(model));
  for (int y = 0; y < model.y_cardinality(); ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      double s = sc.structural_score(y, b);
      for (std::size_t j = 0; j < idx.size(); ++j) s += sc.vote_score(j, idx[j], y, b);
      logs.push_back(s);
    }
  return log_sum_exp(logs);
}

double exact_log_marginal(const FactorModel& model, std::span<const LabelId> votes, const EnumerationBudget& budget) {
  return exact_log_evidence(model, votes, budget) - exact_log_partition(model, budget);
}

std::vector<double> exact_joint_expectation(const FactorModel& model, const EnumerationBudget& budget) {
  check_budget(model, budget.joint, "joint");
  const StateScorer sc(model);
  auto q = latent_logs(model, sc);
  normalize_from_logs(q);
  const auto& deps = model.dependencies();
  std::vector<double> e(model.size(), 0.0);
  std::vector<double> pv;
  const std::uint32_t per_y = 1U << model.latent_count();
  for (int y = 0; y < model.y_cardinality(); ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      const double w = q[(static_cast<std::size_t>(y) << model.latent_count()) | b];
      if (w == 0.0) continue;
      for (int r : sc.structural()) e[r] += w * sc.structural_value(deps[r], y, b);
      for (std::size_t j = 0; j < model.ilf_count(); ++j) {
        sc.vote_logits(j, y, b, pv);
        softmax_inplace(pv);
        for (std::size_t v = 0; v < pv.size(); ++v)
          for (int r : sc.by_vote(j, v))
            if (sc.vote_factor_active(deps[r], y, b)) e[r] += w * pv[v];
      }
    }
  return e;
}

std::vector<double> exact_conditional_expectation(const FactorModel& model, std::span<const LabelId> votes,
                                                  const EnumerationBudget& budget) {
  const JointTable post = exact_posterior(model, votes, budget);
  const StateScorer sc(model);
  const auto idx = sc.vote_indices(votes);
  const auto& deps = model.dependencies();
  std::vector<double> e(model.size(), 0.0);
  const std::uint32_t per_y = 1U << model.latent_count();
  for (int y = 0; y < model.y_cardinality(); ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      const double w = post.prob[post.index(y, b)];
      if (w == 0.0) continue;
      for (int r : sc.structural()) e[r] += w * sc.structural_value(deps[r], y, b);
      for (std::size_t j = 0; j < idx.size(); ++j)
        for (int r : sc.by_vote(j, idx[j]))
          if (sc.vote_factor_active(deps[r], y, b)) e[r] += w;
    }
  return e;
}

// ---------------------------------------------------------------------------

ExactSampler::ExactSampler(const FactorModel& model, const EnumerationBudget& budget)
    : model_(&model), budget_(budget), scorer_(std::make_unique<StateScorer>(model)) {
  check_budget(model, budget.joint, "joint");
  joint_ = make_table(model);
  joint_.prob = latent_logs(model, *scorer_);
  normalize_from_logs(joint_.prob);
}

ExactSampler::~ExactSampler() = default;
ExactSampler::ExactSampler(ExactSampler&&) noexcept = default;
ExactSampler& ExactSampler::operator=(ExactSampler&&) noexcept = default;

void ExactSampler::fill_latent(Assignment& a, std::size_t state) const {
  const int lc = model_->latent_count();
  a.y = static_cast<int>(state >> lc);
  a.y_bar.resize(static_cast<std::size_t>(lc));
  for (int i = 0; i < lc; ++i) a.y_bar[i] = static_cast<std::uint8_t>((state >> i) & 1U);
}

Assignment ExactSampler::sample_joint(Rng& rng) const { return draw_votes(categorical(joint_.prob, rng), rng); }

Assignment ExactSampler::sample_given_y(int y, Rng& rng) const {
  if (y < 0 || y >= model_->y_cardinality()) throw std::invalid_argument("sample_given_y: y out of range");
  const std::size_t per_y = std::size_t{1} << model_->latent_count();
  const std::span<const double> row(joint_.prob.data() + joint_.index(y, 0), per_y);
  return draw_votes(joint_.index(y, 0) + categorical(row, rng), rng);
}

Assignment ExactSampler::draw_votes(std::size_t state, Rng& rng) const {
  Assignment a;
  fill_latent(a, state);
  const StateScorer& sc = *scorer_;
  const auto bits = static_cast<std::uint32_t>(state & ((std::size_t{1} << model_->latent_count()) - 1));
  std::vector<double> pv;
  a.lambda.resize(model_->ilf_count());
  for (std::size_t j = 0; j < model_->ilf_count(); ++j) {
    sc.vote_logits(j, a.y, bits, pv);
    softmax_inplace(pv);
    a.lambda[j] = model_->ilf_domain(j)[categorical(pv, rng)];
  }
  return a;
}

Assignment ExactSampler::sample_conditional(std::span<const LabelId> votes, Rng& rng) const {
  const StateScorer& sc = *scorer_;
  const auto idx = sc.vote_indices(votes);
  const std::uint32_t per_y = 1U << model_->latent_count();
  std::vector<double> logs(joint_.prob.size());
  for (int y = 0; y < model_->y_cardinality(); ++y)
    for (std::uint32_t b = 0; b < per_y; ++b) {
      double s = sc.structural_score(y, b);
      for (std::size_t j = 0; j < idx.size(); ++j) s += sc.vote_score(j, idx[j], y, b);
      logs[joint_.index(y, b)] = s;
    }
  softmax_inplace(logs);
  Assignment a;
  fill_latent(a, categorical(logs, rng));
  a.lambda.assign(votes.begin(), votes.end());
  return a;
}

// ---------------------------------------------------------------------------

namespace {

double site_score(const FactorModel& model, const std::vector<int>& deps, const Assignment& a) {
  double s = 0.0;
  const auto& all = model.dependencies();
  const auto& theta = model.theta();
  for (int r : deps)
    if (const int v = factor_value(all[r], a); v != 0) s += theta[r] * v;
  return s;
}

}  // namespace

std::vector<double> full_conditional(const FactorModel& model, const Assignment& a, Site site) {
  model.validate(a);
  Assignment work = a;
  std::vector<double> logits;
  switch (site.kind) {
    case Site::Kind::y:
      for (int v = 0; v < model.y_cardinality(); ++v) {
        work.y = v;
        logits.push_back(site_score(model, model.deps_on_y(), work));
      }
      break;
    case Site::Kind::latent:
      for (std::uint8_t v : {std::uint8_t{0}, std::uint8_t{1}}) {
        work.y_bar.at(site.index) = v;
        logits.push_back(site_score(model, model.deps_on_latent(site.index), work));
      }
      break;
    case Site::Kind::vote:
      for (LabelId v : model.ilf_domain(site.index)) {
        work.lambda.at(site.index) = v;
        logits.push_back(site_score(model, model.deps_on_ilf(site.index), work));
      }
      break;
  }
  softmax_inplace(logits);
  return logits;
}

GibbsChain::GibbsChain(const FactorModel& model, std::optional<std::vector<LabelId>> clamp, std::uint64_t seed)
    : model_(&model), clamped_(clamp.has_value()), rng_(make_rng(seed)) {
  state_.y = static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(model.y_cardinality())));
  state_.y_bar.resize(static_cast<std::size_t>(model.latent_count()));
  for (auto& b : state_.y_bar) b = static_cast<std::uint8_t>(uniform_index(rng_, 2));
  if (clamp) {
    state_.lambda = std::move(*clamp);
  } else {
    state_.lambda.resize(model.ilf_count());
    for (std::size_t j = 0; j < model.ilf_count(); ++j) {
      const auto& dom = model.ilf_domain(j);
      state_.lambda[j] = dom[uniform_index(rng_, dom.size())];
    }
  }
  model.validate(state_);
}

GibbsChain::GibbsChain(const FactorModel& model, std::optional<std::vector<LabelId>> clamp, Assignment init, Rng rng)
    : model_(&model), clamped_(clamp.has_value()), state_(std::move(init)), rng_(rng) {
  if (clamp) state_.lambda = std::move(*clamp);
  model.validate(state_);
}

void GibbsChain::resample_y() {
  scratch_.clear();
  for (int v = 0; v < model_->y_cardinality(); ++v) {
    state_.y = v;
    scratch_.push_back(site_score(*model_, model_->deps_on_y(), state_));
  }
  softmax_inplace(scratch_);
  state_.y = static_cast<int>(categorical(scratch_, rng_));
}

void GibbsChain::resample_latent(std::size_t i) {
  const auto& deps = model_->deps_on_latent(i);
  state_.y_bar[i] = 0;
  const double s0 = site_score(*model_, deps, state_);
  state_.y_bar[i] = 1;
  const double s1 = site_score(*model_, deps, state_);
  const double p1 = 1.0 / (1.0 + std::exp(s0 - s1));
  state_.y_bar[i] = static_cast<std::uint8_t>(uniform01(rng_) < p1);
}

void GibbsChain::resample_vote(std::size_t j) {
  const auto& dom = model_->ilf_domain(j);
  scratch_.clear();
  for (LabelId v : dom) {
    state_.lambda[j] = v;
    scratch_.push_back(site_score(*model_, model_->deps_on_ilf(j), state_));
  }
  softmax_inplace(scratch_);
  state_.lambda[j] = dom[categorical(scratch_, rng_)];
}

void GibbsChain::sweep() {
  resample_y();
  for (std::size_t i = 0; i < state_.y_bar.size(); ++i) resample_latent(i);
  if (!clamped_)
    for (std::size_t j = 0; j < state_.lambda.size(); ++j) resample_vote(j);
}

std::vector<Assignment> gibbs_sample(const FactorModel& model, std::optional<std::vector<LabelId>> clamp, int sweeps,
                                     int burn_in, std::uint64_t seed) {
  if (burn_in < 0 || sweeps <= burn_in) throw std::invalid_argument("gibbs_sample needs sweeps > burn_in >= 0");
  GibbsChain chain(model, std::move(clamp), seed);
  std::vector<Assignment> out;
  out.reserve(static_cast<std::size_t>(sweeps - burn_in));
  for (int s = 0; s < sweeps; ++s) {
    chain.sweep();
    if (s >= burn_in) out.push_back(chain.state());
  }
  return out;
}

// ---------------------------------------------------------------------------

InferenceMethod inference_method_from_string(const std::string& s) {
  if (s == "auto") return InferenceMethod::automatic;
  if (s == "exact") return InferenceMethod::exact;
  if (s == "gibbs") return InferenceMethod::gibbs;
  throw std::invalid_argument("unknown inference method '" + s + "'");
}

unsigned default_threads() {
  if (const char* env = std::getenv("WISYNTH_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

PosteriorLabels posterior_labels(const FactorModel& model, const IlfOutputMatrix& outputs, InferenceMethod method,
                                 const GibbsParams& params, const EnumerationBudget& budget, unsigned threads) {
  validate_outputs(model.ilfs(), outputs);
  if (outputs.rows() > 0 && outputs.cols() != model.ilf_count())
    throw std::invalid_argument("outputs do not match the model's ILFs");

  bool exact = method == InferenceMethod::exact;
  if (method == InferenceMethod::automatic) exact = latent_state_count(model) <= budget.conditional;
  if (exact) check_budget(model, budget.conditional, "conditional");
  if (!exact && (params.burn_in < 0 || params.sweeps <= params.burn_in))
    throw std::invalid_argument("Gibbs inference needs sweeps > burn_in >= 0");

  // Unique vote rows, keyed by first occurrence.
  std::map<std::vector<LabelId>, std::size_t> unique_of;
  std::vector<std::size_t> first_row;
  std::vector<std::size_t> row_to_unique(outputs.rows());
  for (std::size_t i = 0; i < outputs.rows(); ++i) {
    auto r = outputs.row(i);
    auto [it, inserted] = unique_of.emplace(std::vector<LabelId>(r.begin(), r.end()), first_row.size());
    if (inserted) first_row.push_back(i);
    row_to_unique[i] = it->second;
  }

  std::vector<std::vector<double>> unique_probs(first_row.size());
  auto work = [&](std::size_t u) {
    const auto votes = outputs.row(first_row[u]);
    if (exact) {
      unique_probs[u] = exact_posterior(model, votes, budget).y_marginal();
      return;
    }
    std::vector<double> counts(static_cast<std::size_t>(model.y_cardinality()), 0.0);
    GibbsChain chain(model, std::vector<LabelId>(votes.begin(), votes.end()),
                     splitmix64(params.seed) ^ splitmix64(first_row[u] + 1));
    for (int s = 0; s < params.sweeps; ++s) {
      chain.sweep();
      if (s >= params.burn_in) counts[chain.state().y] += 1.0;
    }
    const double n = static_cast<double>(params.sweeps - params.burn_in);
    for (double& c : counts) c /= n;
    unique_probs[u] = std::move(counts);
  };

  const unsigned n_threads = std::max(1U, std::min<unsigned>(threads ? threads : default_threads(),
                                                             static_cast<unsigned>(first_row.size())));
  if (n_threads <= 1) {
    for (std::size_t u = 0; u < first_row.size(); ++u) work(u);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t u = t; u < first_row.size(); u += n_threads) work(u);
      });
    for (auto& th : pool) th.join();
  }

  PosteriorLabels out;
  out.has_unknown = model.include_unknown();
  out.probs.reserve(outputs.rows());
  for (std::size_t i = 0; i < outputs.rows(); ++i) out.probs.push_back(unique_probs[row_to_unique[i]]);
  std::ostringstream prov;
  if (exact)
    prov << "exact";
  else
    prov << "gibbs(sweeps=" << params.sweeps << ",burn_in=" << params.burn_in << ",seed=" << params.seed << ")";
  out.provenance = prov.str();
  return out;
}

}  // namespace wisynth
