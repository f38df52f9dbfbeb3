#include "scmoa/theory.hpp"

#include <algorithm>
#include <cmath>

#include "scmoa/rng.hpp"
#include "scmoa/stats.hpp"

namespace scmoa {

double SyntheticEnsemble::min_competence() const {
  double m = 1.0;
  for (double p : competences) m = std::min(m, p);
  return m;
}

void SyntheticEnsemble::validate() const {
  if (n < 1) throw Error(ErrorCode::kConfigError, "ensemble size must be >= 1");
  if (static_cast<int>(competences.size()) != n)
    throw Error(ErrorCode::kConfigError, "one competence per agent required");
  for (double p : competences) {
    if (p <= 0.0 || p >= 1.0)
      throw Error(ErrorCode::kConfigError, "competences must lie in (0,1)");
  }
  if (rho < 0.0 || rho > 1.0)
    throw Error(ErrorCode::kConfigError, "rho must lie in [0,1]");
  if (answer_space_size < 2)
    throw Error(ErrorCode::kConfigError, "answer space must have >= 2 answers");
}

double jury_bound(int n, double epsilon, double rho_bar) {
  if (epsilon <= 0.0) throw Error(ErrorCode::kConfigError, "epsilon must be > 0");
  if (rho_bar < 0.0 || rho_bar > 1.0)
    throw Error(ErrorCode::kConfigError, "rho_bar must lie in [0,1]");
  double denom = 1.0 + (n - 1) * rho_bar;
  return 1.0 - std::exp(-2.0 * n * epsilon * epsilon / denom);
}

namespace {

double binomial_coefficient(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double result = 1.0;
  for (int i = 1; i <= k; ++i) {
    result *= static_cast<double>(n - k + i);
    result /= static_cast<double>(i);
  }
  return result;
}

}  // namespace

double fidelity_bound(int n, double p_min, double c) {
  if (p_min <= 0.5 || p_min >= 1.0)
    throw Error(ErrorCode::kConfigError, "p_min must lie in (0.5, 1)");
  if (c <= 0.0 || c > 1.0) throw Error(ErrorCode::kConfigError, "c must lie in (0, 1]");
  int m = static_cast<int>(std::ceil(n * c - 1e-12));
  double ratio = (1.0 - p_min) / p_min;
  double bound = 1.0 - binomial_coefficient(n, m) * std::pow(ratio, m);
  return std::clamp(bound, 0.0, 1.0);
}

double gate_loss_bound(double f_theta, double p_c_ge_theta, double p_agg_corrects) {
  for (double v : {f_theta, p_c_ge_theta, p_agg_corrects}) {
    if (v < 0.0 || v > 1.0)
      throw Error(ErrorCode::kConfigError, "gate-loss arguments must lie in [0,1]");
  }
  return (1.0 - f_theta) * p_c_ge_theta * p_agg_corrects;
}

ExtractionBound extraction_bound(double q, double p_sub, double p_c, double p_w, double f_s) {
  for (double v : {q, p_sub, p_c, p_w, f_s}) {
    if (v < 0.0 || v > 1.0)
      throw Error(ErrorCode::kConfigError, "extraction-bound arguments must lie in [0,1]");
  }
  ExtractionBound out;
  out.lower_bound_advantage = p_w * q * p_sub - p_c * (1.0 - f_s);
  double denom = p_c + p_w * q * p_sub;
  out.nondeg_condition = denom > 0.0 ? f_s >= p_c / denom : f_s >= 1.0;
  return out;
}

namespace {

// One trial's answers: 0 is the correct answer, wrong answers are uniform
// over {1 .. A-1}. Common-cause trials copy a single shared draw with
// probability rho.
void draw_answers(const SyntheticEnsemble& e, SplitMix64& rng, std::vector<int>& answers) {
  answers.resize(e.n);
  if (e.correlation == CorrelationModel::kCommonCause && rng.next_bernoulli(e.rho)) {
    int shared;
    if (rng.next_bernoulli(e.min_competence())) {
      shared = 0;
    } else {
      shared = 1 + static_cast<int>(rng.next_below(e.answer_space_size - 1));
    }
    std::fill(answers.begin(), answers.end(), shared);
    return;
  }
  for (int i = 0; i < e.n; ++i) {
    if (rng.next_bernoulli(e.competences[i])) {
      answers[i] = 0;
    } else {
      answers[i] = 1 + static_cast<int>(rng.next_below(e.answer_space_size - 1));
    }
  }
}

struct Plurality {
  int answer = -1;   // -1 when tied for the top count
  int k_max = 0;
};

Plurality plurality_of(const std::vector<int>& answers, int answer_space) {
  std::vector<int> counts(answer_space, 0);
  for (int a : answers) ++counts[a];
  Plurality p;
  int ties = 0;
  for (int a = 0; a < answer_space; ++a) {
    if (counts[a] > p.k_max) {
      p.k_max = counts[a];
      p.answer = a;
      ties = 1;
    } else if (counts[a] == p.k_max && counts[a] > 0) {
      ++ties;
    }
  }
  if (ties > 1) p.answer = -1;  // tied pluralities never count as correct
  return p;
}

}  // namespace

ConsensusLevelStats VoteSimulation::at_least(int m) const {
  ConsensusLevelStats out;
  for (const auto& [k, stats] : fidelity_by_consensus) {
    if (k >= m) {
      out.trials += stats.trials;
      out.majority_correct += stats.majority_correct;
    }
  }
  return out;
}

VoteSimulation simulate_vote(const SyntheticEnsemble& ensemble, int64_t trials) {
  ensemble.validate();
  if (trials < 1) throw Error(ErrorCode::kConfigError, "trials must be >= 1");

  VoteSimulation out;
  int64_t majority_correct = 0;
  std::vector<std::vector<bool>> correctness;
  correctness.reserve(static_cast<size_t>(std::min<int64_t>(trials, 1 << 20)));
  std::vector<int> answers;

  for (int64_t t = 0; t < trials; ++t) {
    SplitMix64 rng(derive_seed(ensemble.seed, static_cast<uint64_t>(t)));
    draw_answers(ensemble, rng, answers);

    int correct_count = 0;
    std::vector<bool> row(ensemble.n);
    for (int i = 0; i < ensemble.n; ++i) {
      row[i] = answers[i] == 0;
      correct_count += row[i] ? 1 : 0;
    }
    correctness.push_back(std::move(row));
    if (2 * correct_count > ensemble.n) ++majority_correct;

    Plurality p = plurality_of(answers, ensemble.answer_space_size);
    auto& stats = out.fidelity_by_consensus[p.k_max];
    ++stats.trials;
    if (p.answer == 0) ++stats.majority_correct;
  }

  out.empirical_majority_acc = static_cast<double>(majority_correct) / trials;
  if (ensemble.n >= 2) {
    out.empirical_rho_bar = error_correlation(correctness).rho_bar;
  }
  return out;
}

RefinementSimulation simulate_refinement(const SyntheticEnsemble& ensemble,
                                         const RefinementOperator& op, int64_t trials) {
  ensemble.validate();
  if (op.adopt_prob < 0 || op.improve_prob < 0 || op.adopt_prob + op.improve_prob > 1.0)
    throw Error(ErrorCode::kConfigError, "adopt/improve probabilities must sum to <= 1");
  if (trials < 1) throw Error(ErrorCode::kConfigError, "trials must be >= 1");

  RefinementSimulation out;
  out.transition.assign(ensemble.n + 1, std::vector<int64_t>(ensemble.n + 1, 0));
  int64_t pre_correct = 0, post_correct = 0;
  int64_t paired_diff_sum = 0, paired_diff_sq = 0;
  std::vector<int> answers;

  for (int64_t t = 0; t < trials; ++t) {
    SplitMix64 rng(derive_seed(ensemble.seed ^ 0x5ca1ab1eULL, static_cast<uint64_t>(t)));
    draw_answers(ensemble, rng, answers);

    Plurality pre = plurality_of(answers, ensemble.answer_space_size);
    bool pre_ok = pre.answer == 0;

    std::vector<int> refined = answers;
    if (op.anchored && pre.answer >= 0) {
      for (int i = 0; i < ensemble.n; ++i) {
        if (answers[i] == pre.answer) continue;  // plurality cluster is frozen
        double u = rng.next_double();
        if (u < op.adopt_prob) {
          refined[i] = pre.answer;
        } else if (u < op.adopt_prob + op.improve_prob) {
          double p = std::min(ensemble.competences[i] + op.improve_uplift, 0.99);
          if (rng.next_bernoulli(p)) {
            refined[i] = 0;
          } else {
            refined[i] = 1 + static_cast<int>(rng.next_below(ensemble.answer_space_size - 1));
          }
        }  // else defend: unchanged
      }
    } else if (!op.anchored) {
      // Unconstrained control: every agent redraws from its base competence.
      for (int i = 0; i < ensemble.n; ++i) {
        if (rng.next_bernoulli(ensemble.competences[i])) {
          refined[i] = 0;
        } else {
          refined[i] = 1 + static_cast<int>(rng.next_below(ensemble.answer_space_size - 1));
        }
      }
    }

    Plurality post = plurality_of(refined, ensemble.answer_space_size);
    bool post_ok = post.answer == 0;
    pre_correct += pre_ok ? 1 : 0;
    post_correct += post_ok ? 1 : 0;
    int d = (post_ok ? 1 : 0) - (pre_ok ? 1 : 0);
    paired_diff_sum += d;
    paired_diff_sq += d * d;

    out.transition[pre.k_max][post.k_max] += 1;
    if (post.k_max < pre.k_max) ++out.below_diagonal_mass;
    if (op.anchored && 2 * pre.k_max > ensemble.n && post.answer != pre.answer)
      ++out.locked_output_changes;
  }

  out.acc_pre = static_cast<double>(pre_correct) / trials;
  out.acc_post = static_cast<double>(post_correct) / trials;
  double mean_d = static_cast<double>(paired_diff_sum) / trials;
  double var_d = static_cast<double>(paired_diff_sq) / trials - mean_d * mean_d;
  out.paired_diff_sigma = std::sqrt(std::max(var_d, 0.0) / trials);
  return out;
}

HierarchicalComparison hierarchical_vs_flat(const std::vector<ModeSpec>& modes, int n, int k,
                                            int64_t trials, uint64_t seed) {
  if (modes.empty()) throw Error(ErrorCode::kConfigError, "at least one mode required");
  double total_prob = 0.0;
  for (const auto& m : modes) total_prob += m.select_prob;
  if (std::fabs(total_prob - 1.0) > 1e-9)
    throw Error(ErrorCode::kConfigError, "mode selection probabilities must sum to 1");
  if (n < 1 || k < 1 || trials < 1)
    throw Error(ErrorCode::kConfigError, "n, k and trials must be >= 1");

  auto draw_mode = [&](SplitMix64& rng) -> const ModeSpec& {
    double u = rng.next_double();
    double acc = 0.0;
    for (const auto& m : modes) {
      acc += m.select_prob;
      if (u < acc) return m;
    }
    return modes.back();
  };

  HierarchicalComparison out;
  double strat_sum = 0.0, strat_sq = 0.0, flat_sum = 0.0, flat_sq = 0.0;
  int64_t strat_majority = 0, flat_majority = 0;
  const int total_draws = n * k;

  for (int64_t t = 0; t < trials; ++t) {
    SplitMix64 rng(derive_seed(seed, static_cast<uint64_t>(t)));

    // Stratified: one mode per perturbation, round-robin; k draws within.
    int strat_correct_draws = 0;
    int strat_correct_reps = 0;
    for (int i = 0; i < n; ++i) {
      const ModeSpec& mode = modes[i % modes.size()];
      int within = 0;
      for (int j = 0; j < k; ++j) within += rng.next_bernoulli(mode.competence) ? 1 : 0;
      strat_correct_draws += within;
      if (2 * within > k) ++strat_correct_reps;  // inner majority
    }
    double strat_rate = static_cast<double>(strat_correct_draws) / total_draws;
    strat_sum += strat_rate;
    strat_sq += strat_rate * strat_rate;
    if (2 * strat_correct_reps > n) ++strat_majority;

    // Flat: N*k i.i.d. draws, each sampling a mode first.
    int flat_correct = 0;
    for (int d = 0; d < total_draws; ++d) {
      flat_correct += rng.next_bernoulli(draw_mode(rng).competence) ? 1 : 0;
    }
    double flat_rate = static_cast<double>(flat_correct) / total_draws;
    flat_sum += flat_rate;
    flat_sq += flat_rate * flat_rate;
    if (2 * flat_correct > total_draws) ++flat_majority;
  }

  double sm = strat_sum / trials;
  double fm = flat_sum / trials;
  out.var_stratified = strat_sq / trials - sm * sm;
  out.var_flat = flat_sq / trials - fm * fm;
  out.acc_stratified = static_cast<double>(strat_majority) / trials;
  out.acc_flat = static_cast<double>(flat_majority) / trials;
  return out;
}

double enumerate_majority_accuracy(const std::vector<double>& competences) {
  const int n = static_cast<int>(competences.size());
  if (n < 1 || n > 24) throw Error(ErrorCode::kConfigError, "enumeration supports 1..24 agents");
  double total = 0.0;
  for (uint32_t mask = 0; mask < (1u << n); ++mask) {
    int correct = __builtin_popcount(mask);
    if (2 * correct <= n) continue;
    double p = 1.0;
    for (int i = 0; i < n; ++i) {
      p *= (mask >> i) & 1 ? competences[i] : 1.0 - competences[i];
    }
    total += p;
  }
  return total;
}

}  // namespace scmoa
