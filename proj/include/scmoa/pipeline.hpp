#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scmoa/agents.hpp"
#include "scmoa/consensus.hpp"
#include "scmoa/core.hpp"
#include "scmoa/perturb.hpp"
#include "scmoa/prompts.hpp"

namespace scmoa {

// Aggregator-input transforms. Only the Phase-3 call sees the mutation;
// Phases 0-2 are identical across conditions.
enum class Ablation {
  kNone,
  kAnswerOnly,
  kTruncated400,
  kMajorityOnly,
  kMinorityOnly,
  kPermuted,
  kRandom3Of5,
  kNoMetadata,
  kNoEvolution,
  kQOnlyAgg,
  kQOnlyCot,
  kAnswersBare,
  kTracesBare,
};

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct PipelineConfig {
  int n = 5;
  int k = 2;
  // Consensus gate; nullopt means theta = infinity (always aggregate).
  std::optional<double> theta;
  PerturbMode perturb_mode = PerturbMode::kSpuqFreeform;
  Ablation ablation = Ablation::kNone;
  AgentSpec proposer;
  AgentSpec aggregator;
  AgentSpec paraphraser;
  uint64_t seed = 0;
  // Non-default alternative gate that reads post-refinement consensus.
  bool gate_post_refinement = false;

  PerturbOptions perturb;
  ExecConfig exec;
  int refine_problem_char_cap = 2500;
  int stderr_snippet_cap = 500;
  int bare_trace_cap = 1800;
  int truncated_trace_cap = 400;
};

struct AggregationResult {
  std::string raw_text;
  std::optional<ExtractedAnswer> answer;
  double score = 0.0;  // same scorer as the proposals
  bool differs_from_majority = false;
  int64_t tokens_in = 0;
  int64_t tokens_out = 0;
};

struct CallCounts {
  int paraphrase = 0;
  int proposer = 0;
  int refiner = 0;
  int aggregator = 0;

  int raw_total() const { return paraphrase + proposer + refiner + aggregator; }
  // The headline convention counts proposer and aggregator calls only.
  int paper_convention() const { return proposer + aggregator; }
};

struct RunRecord {
  int schema = 1;
  std::string problem_id;
  std::string method;  // scmoa | majority_vote | scmoa_gated

  // Config snapshot.
  int n = 0;
  int k = 0;
  std::optional<double> theta;
  PerturbMode perturb_mode = PerturbMode::kSpuqFreeform;
  Ablation ablation = Ablation::kNone;
  std::string proposer_model, aggregator_model, paraphraser_model;
  uint64_t seed = 0;

  std::vector<Perturbation> perturbations;
  std::vector<Sample> samples;
  std::vector<Proposal> proposals_pre;
  std::vector<Proposal> proposals_post;
  ConsensusRecord consensus;
  std::optional<AggregationResult> aggregate;

  bool gated = false;
  bool override_fired = false;
  bool no_answer = false;  // every sample of every perturbation was unscoreable
  bool aggregator_extraction_failed = false;

  std::optional<ExtractedAnswer> vote_answer;   // pre-refinement majority answer
  int vote_best_perturbation = 0;               // its best proposal (gated-exit answer)
  std::optional<ExtractedAnswer> final_answer;

  std::optional<bool> correct;       // final answer vs gold / private tests
  std::optional<bool> correct_vote;  // majority answer vs gold (= gated correctness)
  std::optional<bool> final_public_all;   // code: final passes every public test
  std::optional<bool> final_private_all;  // code: final passes every private test

  int64_t tokens_in = 0;
  int64_t tokens_out = 0;
  CallCounts calls;
};

class Pipeline {
 public:
  Pipeline(const PromptCatalog& catalog, CachingClient& client, PipelineConfig config);

  // Algorithm phases; exposed individually so tests can drive them.
  std::vector<Proposal> phase1_propose(const Problem& problem,
                                       const std::vector<Perturbation>& perturbations,
                                       CallCounts& calls, std::vector<Sample>& all_samples);

  struct RefineOutcome {
    std::vector<Proposal> proposals;
    ConsensusRecord record;
    int64_t tokens_in = 0;  // refiner-call tokens only
    int64_t tokens_out = 0;
  };
  RefineOutcome phase2_refine(const Problem& problem, const std::vector<Proposal>& proposals,
                              CallCounts& calls);

  AggregationResult phase3_aggregate(const Problem& problem,
                                     const std::vector<Proposal>& refined,
                                     const ConsensusRecord& record, CallCounts& calls);

  struct OverrideOutcome {
    std::optional<ExtractedAnswer> final_answer;
    bool override_fired = false;
    int chosen_perturbation = 0;  // set when the override reverts
  };
  OverrideOutcome apply_override(const AggregationResult& agg,
                                 const std::vector<Proposal>& proposals,
                                 ProblemKind kind) const;

  RunRecord run_scmoa(const Problem& problem);
  RunRecord run_majority_vote(const Problem& problem);

  // Aggregation-input assembly, exposed for ablation tests.
  std::string assemble_aggregate_user(const Problem& problem,
                                      const std::vector<Proposal>& refined,
                                      const ConsensusRecord& record) const;

  const PipelineConfig& config() const { return config_; }

 private:
  std::string persona_name(int perturbation_index, ProblemKind kind) const;
  std::string proposer_system(const Perturbation& p, ProblemKind kind) const;
  std::string render_consensus_evolution(const ConsensusRecord& record,
                                         ProblemKind kind) const;
  void score_proposals(const Problem& problem, std::vector<Proposal>& proposals) const;
  double override_score_of_proposal(const Proposal& p, ProblemKind kind) const;
  void evaluate_correctness(const Problem& problem, RunRecord& record) const;

  const PromptCatalog& catalog_;
  CachingClient& client_;
  PipelineConfig config_;
};

}  // namespace scmoa
