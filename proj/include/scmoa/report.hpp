#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmoa/consensus.hpp"
#include "scmoa/pipeline.hpp"
#include "scmoa/stats.hpp"

namespace scmoa {

struct ThetaSweepPoint {
  std::optional<double> theta;  // nullopt = infinity (always aggregate)
  double accuracy = 0.0;
  int gated_count = 0;
};

// Simulates each gating threshold on existing records: a problem whose
// pre-refinement consensus reaches theta uses the gated (majority) result,
// everything else keeps the aggregated result.
std::vector<ThetaSweepPoint> theta_sweep(const std::vector<RunRecord>& records,
                                         const std::vector<double>& thetas = {
                                             0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});

struct ReportSummary {
  int64_t problems = 0;
  int64_t with_gold = 0;
  double accuracy = 0.0;
  double vote_accuracy = 0.0;
  double mean_calls_raw = 0.0;
  double mean_calls_paper = 0.0;
  double mean_tokens = 0.0;
  double override_rate = 0.0;
  double gated_rate = 0.0;
  double mean_c_pre = 0.0;
  double mean_c_post = 0.0;
};

ReportSummary summarize(const std::vector<RunRecord>& records);

// Per-problem trace diversity over the first sample of each perturbation.
std::optional<double> record_trace_diversity(const RunRecord& record);

// Builds the vote-vs-synthesis inputs for flip analysis. When vote records
// are supplied they provide the VOTE arm (aligned by problem id); otherwise
// the synthesis records' own majority answers are used.
std::vector<FlipInput> build_flip_inputs(const std::vector<RunRecord>& synth_records,
                                         const std::vector<RunRecord>* vote_records);

Contingency contingency_of(const std::vector<FlipInput>& inputs);

std::vector<CodeOutcome> code_outcomes(const std::vector<RunRecord>& records);

// Full text report (aligned tables) plus CSV files when out_dir is given.
std::string render_report(const std::vector<RunRecord>& records,
                          const std::vector<RunRecord>* vote_records,
                          const std::string& out_dir);

}  // namespace scmoa
