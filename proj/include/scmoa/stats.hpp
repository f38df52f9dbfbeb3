#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scmoa/errors.hpp"

namespace scmoa {

// 2x2 vote-vs-synthesis correctness table:
//   cc: vote correct, synth correct    cw: vote correct, synth wrong
//   wc: vote wrong,  synth correct     ww: vote wrong,  synth wrong
struct Contingency {
  int64_t cc = 0, cw = 0, wc = 0, ww = 0;
  int64_t total() const { return cc + cw + wc + ww; }
};

struct Decomposition {
  double p_c = 0.0, p_w = 0.0;
  std::optional<double> f_s;                // synthesis fidelity
  std::optional<double> r_s;                // recovery rate
  double advantage = 0.0;                   // (wc - cw) / n
  std::optional<double> dominance_ratio;    // R_s / (1 - F_s); absent dominance side undefined
  bool dominance_ratio_infinite = false;    // F_s == 1 with R_s > 0
  std::optional<double> nondeg_threshold;   // P_c / (P_c + P_w * R_s)
  bool degenerate_margin = false;           // one of the conditionals was undefined
};

// Synthesis-advantage decomposition of a contingency table. Undefined
// conditionals (empty margins) are reported as absent, never as zero.
Decomposition decompose(const Contingency& t);

struct McNemarResult {
  double chi2 = 0.0;
  double p = 1.0;
};

// Uncorrected McNemar statistic chi2 = (b - c)^2 / (b + c), p from the
// chi-square(1) upper tail; b + c = 0 yields chi2 = 0, p = 1.
McNemarResult mcnemar(int64_t b, int64_t c);

struct BootstrapCi {
  double delta = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;
};

// Percentile CI for mean(a) - mean(b) over seeded resamples of problem
// indices. Resample r draws n indices from the stream seeded by
// derive_seed(seed, r); the 2.5%/97.5% points are the nearest-rank order
// statistics floor(0.025 R) and ceil(0.975 R) - 1 of the sorted deltas.
BootstrapCi bootstrap_diff_ci(const std::vector<bool>& paired_correct_a,
                              const std::vector<bool>& paired_correct_b, int resamples,
                              uint64_t seed);

// Mean pairwise cosine distance between traces in a per-problem TF-IDF
// space: lowercase alphanumeric tokens of length >= 2, the pinned English
// stop-word list removed, at most `max_features` terms kept by corpus
// frequency (ties by term), idf = ln((1+n)/(1+df)) + 1, L2-normalized.
// Returns nullopt when every trace is empty after tokenization (degenerate).
std::optional<double> trace_diversity(const std::vector<std::string>& traces,
                                      int max_features = 5000);

// Mean pairwise Pearson correlation of error indicators. Pairs where either
// column has zero variance are skipped and counted.
struct ErrorCorrelation {
  double rho_bar = 0.0;
  int pairs_used = 0;
  int pairs_skipped = 0;
};

ErrorCorrelation error_correlation(const std::vector<std::vector<bool>>& correct_by_problem);

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;
  int64_t count = 0;
  double mean_conf = 0.0;
  double mean_acc = 0.0;
};

struct AbstentionPoint {
  double coverage = 0.0;
  double accuracy = 0.0;
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double auroc = 0.5;  // ties count 1/2; exact, not trapezoid-approximated
  std::vector<AbstentionPoint> abstention_curve;
};

CalibrationReport calibration(const std::vector<double>& consensus,
                              const std::vector<bool>& correct, int bins = 10);

// Fleiss' kappa over the observed category set; nullopt when only a single
// category appears (kappa undefined).
std::optional<double> fleiss_kappa(const std::vector<std::vector<std::string>>& ratings);

struct DawidSkeneResult {
  std::vector<std::string> labels;  // per-problem argmax posterior label
  bool converged = false;
  int iterations = 0;
};

// Multinomial Dawid-Skene EM initialized from majority vote.
DawidSkeneResult dawid_skene(const std::vector<std::vector<std::string>>& votes,
                             int max_iters = 100, double tol = 1e-9);

// Index with the most pairwise wins; ties by higher quality, then lowest
// index. wins[i][j] == true means i beat j.
int borda_from_pairwise(const std::vector<std::vector<bool>>& wins,
                        const std::vector<double>& qualities = {});

struct WelchT {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;  // two-sided
};

WelchT welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct FlipStratum {
  std::string name;
  int64_t count = 0;
  double mean_dt = 0.0;
  double std_dt = 0.0;
};

struct FlipAnalysis {
  Contingency contingency;
  std::vector<std::string> beneficial;  // problem ids, vote wrong -> synth correct
  std::vector<std::string> harmful;     // vote correct -> synth wrong
  std::vector<FlipStratum> strata;      // beneficial / harmful / no_flip D_t stats
  std::optional<WelchT> beneficial_vs_noflip;
};

struct FlipInput {
  std::string problem_id;
  bool vote_correct = false;
  bool synth_correct = false;
  std::optional<double> trace_diversity;  // absent when degenerate
};

FlipAnalysis flip_analysis(const std::vector<FlipInput>& items);

// Chi-square(1) upper tail and Student-t two-sided p; exposed for reuse.
double chi2_sf_1df(double x);
double student_t_two_sided_p(double t, double df);

}  // namespace scmoa
