#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scmoa/errors.hpp"

namespace scmoa {

enum class CorrelationModel { kIndependent, kCommonCause };

// Synthetic correlated-agent model used to exercise the closed-form bounds.
// Wrong answers are uniform over the remaining answer space; with the
// common-cause model, an entire trial copies one shared draw (competence
// = the minimum competence) with probability rho, giving mean pairwise
// error correlation ~ rho by construction.
struct SyntheticEnsemble {
  int n = 5;
  std::vector<double> competences;  // each in (0,1)
  CorrelationModel correlation = CorrelationModel::kIndependent;
  double rho = 0.0;  // used by the common-cause model
  int answer_space_size = 4;
  uint64_t seed = 0;

  double min_competence() const;
  void validate() const;
};

struct RefinementOperator {
  double adopt_prob = 0.0;
  double improve_prob = 0.0;  // defend = remainder
  bool anchored = true;
  double improve_uplift = 0.15;  // competence bump for "improve", clamped to 0.99
};

// Correlated-voter lower bound on majority accuracy:
// 1 - exp(-2 N eps^2 / (1 + (N-1) rho_bar)).
double jury_bound(int n, double epsilon, double rho_bar);

// Consensus fidelity bound at threshold c: with m = ceil(N c),
// 1 - C(N, m) ((1 - p_min) / p_min)^m, clamped to [0, 1].
double fidelity_bound(int n, double p_min, double c);

// Gate-loss bound: (1 - F_theta) * P(C >= theta) * P(aggregation corrects).
double gate_loss_bound(double f_theta, double p_c_ge_theta, double p_agg_corrects);

struct ExtractionBound {
  double lower_bound_advantage = 0.0;
  bool nondeg_condition = false;  // F_s >= P_c / (P_c + P_w q p_sub)
};

ExtractionBound extraction_bound(double q, double p_sub, double p_c, double p_w, double f_s);

struct ConsensusLevelStats {
  int64_t trials = 0;
  int64_t majority_correct = 0;
  double fidelity() const {
    return trials > 0 ? static_cast<double>(majority_correct) / trials : 0.0;
  }
};

struct VoteSimulation {
  double empirical_majority_acc = 0.0;  // strictly more than N/2 agents correct
  double empirical_rho_bar = 0.0;
  // Keyed by k_max (plurality cluster size); fidelity = P(plurality answer
  // correct | k_max = key). Ties for the plurality count as incorrect.
  std::map<int, ConsensusLevelStats> fidelity_by_consensus;

  // P(plurality correct | k_max >= m), the Eq.-4 conditioning.
  ConsensusLevelStats at_least(int m) const;
};

VoteSimulation simulate_vote(const SyntheticEnsemble& ensemble, int64_t trials);

struct RefinementSimulation {
  double acc_pre = 0.0;
  double acc_post = 0.0;
  double paired_diff_sigma = 0.0;  // MC std error of (acc_post - acc_pre)
  // transition[i][j]: trials moving from k_max = i pre to k_max = j post.
  std::vector<std::vector<int64_t>> transition;
  int64_t below_diagonal_mass = 0;
  int64_t locked_output_changes = 0;  // strict-majority trials whose answer moved
};

// Anchored refinement freezes the plurality cluster and redraws only the
// minorities (adopt -> plurality answer, improve -> fresh draw at elevated
// competence, defend -> unchanged). anchored=false is the unconstrained
// control that redraws every agent.
RefinementSimulation simulate_refinement(const SyntheticEnsemble& ensemble,
                                         const RefinementOperator& op, int64_t trials);

struct ModeSpec {
  double select_prob = 1.0;
  double competence = 0.5;
};

struct HierarchicalComparison {
  double var_stratified = 0.0;  // variance of the correct-rate estimator
  double var_flat = 0.0;
  double acc_stratified = 0.0;  // majority accuracy, stratified N perturbations x k
  double acc_flat = 0.0;        // majority accuracy, flat N*k i.i.d. draws
};

HierarchicalComparison hierarchical_vs_flat(const std::vector<ModeSpec>& modes, int n, int k,
                                            int64_t trials, uint64_t seed);

// Exact majority accuracy by exhaustive enumeration over agent outcomes;
// per-agent competences given explicitly. Majority = strictly more than
// half the agents correct.
double enumerate_majority_accuracy(const std::vector<double>& competences);

}  // namespace scmoa
