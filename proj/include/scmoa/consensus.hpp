#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scmoa/core.hpp"

namespace scmoa {

struct ExecLimits {
  int wall_ms = 4000;
  int mem_mb = 512;
};

struct ExecConfig {
  // {solution_file} is replaced with the temp path the solution is written
  // to; the command is split on spaces (no shell).
  std::string command_template = "python3 {solution_file}";
  std::string solution_suffix = ".py";
  ExecLimits limits;
};

struct TestResult {
  std::string name;
  bool passed = false;
  std::string stdout_text;
  std::string stderr_text;
  bool timed_out = false;
};

// Runs one solution against each test in an isolated subprocess: fresh temp
// dir, stdin fed from the case, wall-clock kill and an address-space cap.
// Output comparison trims trailing whitespace per line and trailing blank
// lines. Throws ExecutorFailure only for sandbox-level faults (the command
// cannot be spawned), never for failing or crashing solutions.
std::vector<TestResult> run_tests(const std::string& solution_source,
                                  const std::vector<TestCase>& tests,
                                  const ExecConfig& config);

// Public-test pass rate in [0,1]; tests must be nonempty.
double code_quality_score(const std::string& solution_source,
                          const std::vector<TestCase>& public_tests,
                          const ExecConfig& config);

double pass_fraction(const std::vector<TestResult>& results);
std::vector<std::string> passed_test_names(const std::vector<TestResult>& results);

// The judge's output equality: trailing whitespace per line and trailing
// blank lines are ignored.
bool outputs_match(const std::string& actual, const std::string& expected);

// score(i) = |{j : a_j equivalent to a_i}| / N over the proposal set.
std::vector<double> qa_quality_scores(const std::vector<Proposal>& proposals);

struct Cluster {
  int label = 0;
  std::vector<int> members;  // perturbation indices, ascending
  // Representative key: canonical answer for QA, the joined test-pass
  // signature for code.
  std::string representative_key;
  std::optional<ExtractedAnswer> representative_answer;
  std::vector<std::string> representative_signature;
  int size = 0;
  double mean_quality = 0.0;
};

// Partitions scoreable proposals: QA by answer equivalence (faithful),
// code by exact test-pass signature (unfaithful). Clusters are ordered by
// first occurrence. Throws NoScoreableProposals when nothing clusters.
std::vector<Cluster> cluster_proposals(const std::vector<Proposal>& proposals,
                                       ProblemKind kind);

struct MajoritySelection {
  int cluster_index = 0;  // into the cluster list
  double consensus = 0.0;  // k_max / N
};

// Largest cluster wins; ties break by higher mean quality, then by earliest
// first occurrence (lowest minimum member index). `n_total` is the N the
// consensus fraction is measured against.
MajoritySelection select_majority(const std::vector<Cluster>& clusters, int n_total);

struct ConsensusRecord {
  std::vector<Cluster> clusters_pre;
  std::vector<Cluster> clusters_post;
  double c_pre = 0.0;
  double c_post = 0.0;
  std::string majority_answer_pre;  // canonical key
  std::map<int, RefinementAnnotation> actions;  // minority perturbation index -> action
  std::vector<double> alphas;
};

struct FidelityGapReport {
  int records_considered = 0;
  int public_pass_count = 0;
  int private_also_pass_count = 0;
  // Absent when no record passes all public tests (undefined ratio).
  std::optional<double> p_private_given_public;
  std::optional<double> false_positive_rate;
};

struct CodeOutcome {
  std::string problem_id;
  bool public_all_passed = false;
  bool private_all_passed = false;
};

FidelityGapReport fidelity_gap_report(const std::vector<CodeOutcome>& outcomes);

}  // namespace scmoa
