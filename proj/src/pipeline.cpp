#include "scmoa/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "scmoa/rng.hpp"

namespace scmoa {

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kAnswerOnly: return "answer_only";
    case Ablation::kTruncated400: return "truncated_400";
    case Ablation::kMajorityOnly: return "majority_only";
    case Ablation::kMinorityOnly: return "minority_only";
    case Ablation::kPermuted: return "permuted";
    case Ablation::kRandom3Of5: return "random_3_of_5";
    case Ablation::kNoMetadata: return "no_metadata";
    case Ablation::kNoEvolution: return "no_evolution";
    case Ablation::kQOnlyAgg: return "q_only_agg";
    case Ablation::kQOnlyCot: return "q_only_cot";
    case Ablation::kAnswersBare: return "answers_bare";
    case Ablation::kTracesBare: return "traces_bare";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& s) {
  static const std::map<std::string, Ablation> kMap = {
      {"none", Ablation::kNone},
      {"answer_only", Ablation::kAnswerOnly},
      {"truncated_400", Ablation::kTruncated400},
      {"majority_only", Ablation::kMajorityOnly},
      {"minority_only", Ablation::kMinorityOnly},
      {"permuted", Ablation::kPermuted},
      {"random_3_of_5", Ablation::kRandom3Of5},
      {"no_metadata", Ablation::kNoMetadata},
      {"no_evolution", Ablation::kNoEvolution},
      {"q_only_agg", Ablation::kQOnlyAgg},
      {"q_only_cot", Ablation::kQOnlyCot},
      {"answers_bare", Ablation::kAnswersBare},
      {"traces_bare", Ablation::kTracesBare},
  };
  auto it = kMap.find(s);
  if (it == kMap.end()) throw Error(ErrorCode::kParseError, "unknown ablation: " + s);
  return it->second;
}

namespace {

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string truncate(const std::string& s, size_t cap) {
  return s.size() <= cap ? s : s.substr(0, cap);
}

std::string status_string(RefinementAnnotation a) {
  switch (a) {
    case RefinementAnnotation::kUnchangedMajority: return "[UNCHANGED --- majority]";
    case RefinementAnnotation::kAdopted: return "[REFINED --- ADOPTED]";
    case RefinementAnnotation::kImproved: return "[REFINED --- IMPROVED]";
    case RefinementAnnotation::kDefended: return "[REFINED --- DEFENDED]";
    case RefinementAnnotation::kNone: return "[UNCHANGED --- majority]";
  }
  return "[UNCHANGED --- majority]";
}

std::string describe_cluster(const Cluster& c, ProblemKind kind) {
  std::ostringstream out;
  if (kind == ProblemKind::kQa) {
    out << "answer '" << (c.representative_answer ? c.representative_answer->normalized : "?")
        << "'";
  } else {
    out << "signature {";
    for (size_t i = 0; i < c.representative_signature.size(); ++i) {
      if (i) out << ", ";
      out << c.representative_signature[i];
    }
    out << "}";
  }
  out << ": " << c.size << (c.size == 1 ? " member [" : " members [");
  for (size_t i = 0; i < c.members.size(); ++i) {
    if (i) out << ", ";
    out << c.members[i];
  }
  out << "]";
  return out.str();
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t eol = s.find('\n', pos);
    if (eol == std::string::npos) {
      lines.push_back(s.substr(pos));
      break;
    }
    lines.push_back(s.substr(pos, eol - pos));
    pos = eol + 1;
  }
  return lines;
}

}  // namespace

Pipeline::Pipeline(const PromptCatalog& catalog, CachingClient& client, PipelineConfig config)
    : catalog_(catalog), client_(client), config_(std::move(config)) {
  if (config_.n < 1 || config_.k < 1)
    throw Error(ErrorCode::kConfigError, "N and k must both be >= 1");
}

std::string Pipeline::persona_name(int perturbation_index, ProblemKind kind) const {
  if (config_.perturb_mode != PerturbMode::kPersona) return "specialist";
  const auto& personas = catalog_.personas(kind);
  return personas[(perturbation_index - 1) % personas.size()].name;
}

std::string Pipeline::proposer_system(const Perturbation& p, ProblemKind kind) const {
  if (config_.perturb_mode == PerturbMode::kPersona) {
    const auto& personas = catalog_.personas(kind);
    return personas[(p.index - 1) % personas.size()].system;
  }
  return catalog_.proposer_system(kind);
}

std::vector<Proposal> Pipeline::phase1_propose(const Problem& problem,
                                               const std::vector<Perturbation>& perturbations,
                                               CallCounts& calls,
                                               std::vector<Sample>& all_samples) {
  const ProblemKind kind = problem.kind;
  std::vector<Proposal> proposals;
  proposals.reserve(perturbations.size());

  for (const auto& perturbation : perturbations) {
    if (!perturbation.validated)
      throw Error(ErrorCode::kConfigError, "perturbations must be validated before Phase 1");

    std::vector<Sample> samples(config_.k);
    std::vector<std::vector<std::string>> signatures(config_.k);
    std::vector<double> sample_scores(config_.k, -1.0);

    for (int j = 0; j < config_.k; ++j) {
      ChatRequest req;
      req.agent = config_.proposer;
      req.system_prompt = proposer_system(perturbation, kind);
      const std::string& templ = catalog_.templ(
          kind == ProblemKind::kQa ? "proposer_user_qa" : "proposer_user_code");
      req.user_prompt = PromptCatalog::substitute(
          templ, {{"problem", perturbation.text},
                  {"answer_format_hint", problem.answer_format_hint}});
      if (config_.k > 1) {
        std::string middle = config_.perturb_mode == PerturbMode::kPersona
                                 ? persona_name(perturbation.index, kind)
                                 : std::to_string(perturbation.index);
        req.user_prompt += "\n\n" + make_variant_tag("scmoa", middle, j);
      }
      ChatResponse resp = client_.complete(req);
      ++calls.proposer;

      Sample s;
      s.perturbation_index = perturbation.index;
      s.sample_index = j;
      s.raw_text = resp.text;
      s.trace = trace_of(resp.text, kind);
      s.extracted = extract_answer(resp.text, problem.answer_format_hint, kind);
      s.tokens_in = resp.tokens_in;
      s.tokens_out = resp.tokens_out;
      samples[j] = std::move(s);
    }

    // Score each sample: QA by within-perturbation agreement over the k
    // extracted answers, code by public test pass rate.
    for (int j = 0; j < config_.k; ++j) {
      if (!samples[j].extracted) continue;
      if (kind == ProblemKind::kQa) {
        int matches = 0;
        for (int l = 0; l < config_.k; ++l) {
          if (samples[l].extracted &&
              canonical_key(*samples[l].extracted) == canonical_key(*samples[j].extracted))
            ++matches;
        }
        sample_scores[j] = static_cast<double>(matches) / config_.k;
      } else {
        auto results = run_tests(samples[j].extracted->normalized, problem.public_tests,
                                 config_.exec);
        signatures[j] = passed_test_names(results);
        sample_scores[j] = pass_fraction(results);
      }
    }

    Proposal p;
    p.perturbation_index = perturbation.index;
    int best = -1;
    for (int j = 0; j < config_.k; ++j) {
      if (sample_scores[j] < 0) continue;
      if (best < 0 || sample_scores[j] > sample_scores[best]) best = j;  // tie: lowest index
    }
    if (best < 0) {
      // AllSamplesUnscoreable: carried through, excluded from clustering.
      p.best_sample = samples[0];
      p.answer = std::nullopt;
      p.quality = 0.0;
      p.intra_agreement = 0.0;
    } else {
      p.best_sample = samples[best];
      p.answer = samples[best].extracted;
      p.quality = sample_scores[best];
      if (kind == ProblemKind::kQa) {
        p.intra_agreement = sample_scores[best];
      } else {
        int matches = 0;
        for (int j = 0; j < config_.k; ++j) {
          if (sample_scores[j] >= 0 && signatures[j] == signatures[best]) ++matches;
        }
        p.intra_agreement = static_cast<double>(matches) / config_.k;
        p.passed_public = signatures[best];
      }
    }
    proposals.push_back(std::move(p));
    for (auto& s : samples) all_samples.push_back(std::move(s));
  }

  score_proposals(problem, proposals);
  return proposals;
}

void Pipeline::score_proposals(const Problem& problem,
                               std::vector<Proposal>& proposals) const {
  if (problem.kind != ProblemKind::kQa) return;  // code quality is the pass rate, already set
  std::vector<Proposal> scoreable;
  for (const auto& p : proposals)
    if (p.scoreable()) scoreable.push_back(p);
  if (scoreable.empty()) return;
  std::vector<double> scores = qa_quality_scores(scoreable);
  size_t idx = 0;
  for (auto& p : proposals) {
    if (p.scoreable()) p.quality = scores[idx++];
  }
}

Pipeline::RefineOutcome Pipeline::phase2_refine(const Problem& problem,
                                                const std::vector<Proposal>& proposals,
                                                CallCounts& calls) {
  const ProblemKind kind = problem.kind;
  RefineOutcome out;
  out.record.clusters_pre = cluster_proposals(proposals, kind);
  MajoritySelection pre = select_majority(out.record.clusters_pre, config_.n);
  out.record.c_pre = pre.consensus;
  const Cluster& majority = out.record.clusters_pre[pre.cluster_index];
  out.record.majority_answer_pre = majority.representative_key;
  for (const auto& p : proposals) out.record.alphas.push_back(p.intra_agreement);

  std::set<int> majority_members(majority.members.begin(), majority.members.end());

  // Majority's reference proposal: highest quality, then lowest index.
  const Proposal* reference = nullptr;
  for (const auto& p : proposals) {
    if (!p.scoreable() || !majority_members.count(p.perturbation_index)) continue;
    if (!reference || p.quality > reference->quality) reference = &p;
  }

  out.proposals = proposals;
  for (auto& p : out.proposals) {
    if (!p.scoreable()) continue;
    if (majority_members.count(p.perturbation_index)) {
      p.annotation = RefinementAnnotation::kUnchangedMajority;  // frozen, byte-identical
      continue;
    }

    ChatRequest req;
    req.agent = config_.proposer;
    req.system_prompt = PromptCatalog::substitute(
        catalog_.refine_system(kind),
        {{"persona_name", persona_name(p.perturbation_index, kind)},
         {"k_max", std::to_string(majority.size)},
         {"n", std::to_string(config_.n)}});

    std::string failure_block;
    if (kind == ProblemKind::kCode) {
      std::set<std::string> mine(p.passed_public.begin(), p.passed_public.end());
      std::vector<std::string> differing;
      for (const auto& name : majority.representative_signature) {
        if (!mine.count(name)) differing.push_back(name);
      }
      std::ostringstream fa;
      if (differing.empty()) {
        fa << "No public test passed by the majority is failed by this proposal.";
      } else {
        fa << "Public tests passed by the majority but failed by this proposal: ";
        for (size_t i = 0; i < differing.size(); ++i) {
          if (i) fa << ", ";
          fa << differing[i];
        }
        fa << ".";
        auto results = run_tests(p.answer->normalized, problem.public_tests, config_.exec);
        for (const auto& r : results) {
          if (r.passed) continue;
          if (std::find(differing.begin(), differing.end(), r.name) == differing.end())
            continue;
          if (!r.stderr_text.empty()) {
            fa << "\n" << r.name
               << " stderr: " << truncate(r.stderr_text,
                                          static_cast<size_t>(config_.stderr_snippet_cap));
          }
          if (r.timed_out) fa << "\n" << r.name << ": timed out";
        }
      }
      failure_block = PromptCatalog::substitute(catalog_.templ("failure_analysis_block"),
                                                {{"failure_analysis", fa.str()}});
    }

    req.user_prompt = PromptCatalog::substitute(
        catalog_.templ("refine_user"),
        {{"problem", truncate(problem.text, static_cast<size_t>(config_.refine_problem_char_cap))},
         {"quality", fmt2(p.quality)},
         {"intra_agreement", fmt2(p.intra_agreement)},
         {"proposal", p.best_sample.raw_text},
         {"failure_analysis", failure_block},
         {"majority_quality", fmt2(reference ? reference->quality : 0.0)},
         {"k_max", std::to_string(majority.size)},
         {"n", std::to_string(config_.n)},
         {"majority", reference ? reference->best_sample.raw_text : ""}});

    ChatResponse resp = client_.complete(req);
    ++calls.refiner;
    out.tokens_in += resp.tokens_in;
    out.tokens_out += resp.tokens_out;

    auto refined_answer = extract_answer(resp.text, problem.answer_format_hint, kind);
    if (!refined_answer) {
      // Refiner produced nothing extractable: the minority keeps its
      // original proposal and counts as having defended it.
      p.annotation = RefinementAnnotation::kDefended;
      continue;
    }

    Sample refined = p.best_sample;
    refined.raw_text = resp.text;
    refined.trace = trace_of(resp.text, kind);
    refined.extracted = refined_answer;
    refined.tokens_in = resp.tokens_in;
    refined.tokens_out = resp.tokens_out;

    std::string old_key = canonical_key(*p.answer);
    std::string new_key;
    if (kind == ProblemKind::kQa) {
      new_key = canonical_key(*refined_answer);
    } else {
      auto results = run_tests(refined_answer->normalized, problem.public_tests, config_.exec);
      p.passed_public = passed_test_names(results);
      p.quality = pass_fraction(results);
      std::string joined;
      for (const auto& name : p.passed_public) {
        joined += name;
        joined += '\x1f';
      }
      new_key = joined;
    }

    p.best_sample = std::move(refined);
    p.answer = refined_answer;
    if (new_key == majority.representative_key) {
      p.annotation = RefinementAnnotation::kAdopted;
    } else if (new_key == old_key) {
      p.annotation = RefinementAnnotation::kDefended;
    } else {
      p.annotation = RefinementAnnotation::kImproved;
    }
    out.record.actions[p.perturbation_index] = p.annotation;
  }

  // Defended-without-a-call never happens for majority members, but a
  // minority whose refiner reply was unextractable is recorded too.
  for (const auto& p : out.proposals) {
    if (p.scoreable() && !majority_members.count(p.perturbation_index) &&
        !out.record.actions.count(p.perturbation_index)) {
      out.record.actions[p.perturbation_index] = p.annotation;
    }
  }

  score_proposals(problem, out.proposals);
  out.record.clusters_post = cluster_proposals(out.proposals, kind);
  out.record.c_post = select_majority(out.record.clusters_post, config_.n).consensus;
  return out;
}

std::string Pipeline::render_consensus_evolution(const ConsensusRecord& record,
                                                 ProblemKind kind) const {
  std::ostringstream out;
  MajoritySelection pre = select_majority(record.clusters_pre, config_.n);
  const Cluster& pre_majority = record.clusters_pre[pre.cluster_index];
  out << "Pre-refinement: " << pre_majority.size << "/" << config_.n
      << " proposals in the majority cluster (C_pre = " << fmt2(record.c_pre) << ").\n";
  out << "Pre-refinement clusters:\n";
  for (const auto& c : record.clusters_pre) {
    out << "  - " << describe_cluster(c, kind) << "\n";
  }
  if (record.actions.empty()) {
    out << "Refinement actions: none (no minority proposals).\n";
  } else {
    out << "Refinement actions:\n";
    for (const auto& [index, action] : record.actions) {
      out << "  - perturbation " << index << " (" << persona_name(index, kind) << "): ";
      switch (action) {
        case RefinementAnnotation::kAdopted: out << "ADOPTED the majority approach"; break;
        case RefinementAnnotation::kImproved: out << "IMPROVED its own approach"; break;
        case RefinementAnnotation::kDefended: out << "DEFENDED its minority position"; break;
        default: out << "unchanged"; break;
      }
      out << "\n";
    }
  }
  MajoritySelection post = select_majority(record.clusters_post, config_.n);
  const Cluster& post_majority = record.clusters_post[post.cluster_index];
  out << "Post-refinement: " << post_majority.size << "/" << config_.n
      << " proposals in the majority cluster (C_post = " << fmt2(record.c_post) << ").\n";
  out << "Post-refinement clusters:\n";
  for (const auto& c : record.clusters_post) {
    out << "  - " << describe_cluster(c, kind) << "\n";
  }
  out << "Intra-agreement scores:";
  for (size_t i = 0; i < record.alphas.size(); ++i) {
    out << (i ? ", " : " ") << "alpha_" << (i + 1) << " = " << fmt2(record.alphas[i]);
  }
  return out.str();
}

std::string Pipeline::assemble_aggregate_user(const Problem& problem,
                                              const std::vector<Proposal>& refined,
                                              const ConsensusRecord& record) const {
  const ProblemKind kind = problem.kind;
  const Ablation ablation = config_.ablation;

  if (ablation == Ablation::kQOnlyAgg || ablation == Ablation::kQOnlyCot) {
    return problem.text;  // bare problem, zero proposals
  }

  std::vector<const Proposal*> pool;
  for (const auto& p : refined) {
    if (p.scoreable()) pool.push_back(&p);
  }

  if (ablation == Ablation::kAnswersBare) {
    std::string answers;
    for (size_t i = 0; i < pool.size(); ++i) {
      if (i) answers += ", ";
      answers += pool[i]->answer->normalized;
    }
    return PromptCatalog::substitute(catalog_.templ("aggregate_user_bare"),
                                     {{"problem", problem.text}, {"answers", answers}});
  }

  MajoritySelection post = select_majority(record.clusters_post, config_.n);
  const Cluster& post_majority = record.clusters_post[post.cluster_index];
  std::set<int> majority_members(post_majority.members.begin(), post_majority.members.end());

  if (ablation == Ablation::kMajorityOnly) {
    std::vector<const Proposal*> kept;
    for (const Proposal* p : pool)
      if (majority_members.count(p->perturbation_index)) kept.push_back(p);
    pool = std::move(kept);
  } else if (ablation == Ablation::kMinorityOnly) {
    std::vector<const Proposal*> kept;
    for (const Proposal* p : pool)
      if (!majority_members.count(p->perturbation_index)) kept.push_back(p);
    pool = std::move(kept);
  } else if (ablation == Ablation::kRandom3Of5) {
    SplitMix64 rng(derive_seed(config_.seed ^ hash64(problem.id), 2));
    std::vector<const Proposal*> shuffled = pool;
    rng.shuffle(shuffled);
    size_t keep = std::min<size_t>(3, shuffled.size());
    shuffled.resize(keep);
    std::sort(shuffled.begin(), shuffled.end(), [](const Proposal* a, const Proposal* b) {
      return a->perturbation_index < b->perturbation_index;
    });
    pool = std::move(shuffled);
  }

  // Map perturbation index -> post-refinement cluster label.
  std::map<int, int> cluster_of;
  for (const auto& c : record.clusters_post) {
    for (int member : c.members) cluster_of[member] = c.label;
  }

  const bool with_metadata = ablation != Ablation::kNoMetadata &&
                             ablation != Ablation::kTracesBare;
  const bool with_evolution = ablation != Ablation::kNoEvolution &&
                              ablation != Ablation::kTracesBare;

  auto body_of = [&](const Proposal& p) -> std::string {
    switch (ablation) {
      case Ablation::kAnswerOnly:
        return "Answer: " + p.answer->normalized;
      case Ablation::kTruncated400:
        return truncate(p.best_sample.raw_text,
                        static_cast<size_t>(config_.truncated_trace_cap));
      case Ablation::kPermuted: {
        // Shuffle trace steps with the run seed; the committed answer line
        // stays last so the proposal still parses as a proposal.
        SplitMix64 rng(derive_seed(config_.seed ^ hash64(problem.id),
                                   100 + static_cast<uint64_t>(p.perturbation_index)));
        std::vector<std::string> lines = split_lines(p.best_sample.trace);
        rng.shuffle(lines);
        std::string body;
        for (const auto& line : lines) {
          body += line;
          body += '\n';
        }
        if (kind == ProblemKind::kQa) {
          body += "Answer: " + p.answer->raw_span;
        }
        return body;
      }
      case Ablation::kTracesBare:
        return truncate(p.best_sample.raw_text, static_cast<size_t>(config_.bare_trace_cap));
      default:
        return p.best_sample.raw_text;
    }
  };

  std::string proposals_text;
  if (pool.empty()) {
    // Synthetic unanimity note: every proposal sits in the majority cluster.
    std::string answer_desc = kind == ProblemKind::kQa && post_majority.representative_answer
                                  ? post_majority.representative_answer->raw_span
                                  : post_majority.representative_key;
    proposals_text = PromptCatalog::substitute(
        catalog_.templ("unanimity_note"),
        {{"n", std::to_string(config_.n)}, {"answer", answer_desc}});
  } else {
    for (size_t i = 0; i < pool.size(); ++i) {
      const Proposal& p = *pool[i];
      if (i) proposals_text += "\n\n";
      if (ablation == Ablation::kTracesBare) {
        proposals_text += "Proposal " + std::to_string(i + 1) + ":\n" + body_of(p);
        continue;
      }
      proposals_text += "<PROPOSAL index=\"" + std::to_string(p.perturbation_index) + "\"";
      if (with_metadata) {
        proposals_text += " source=\"" + persona_name(p.perturbation_index, kind) + "\"";
        proposals_text += " quality=\"" + fmt2(p.quality) + "\"";
        proposals_text += " intra_agreement=\"" + fmt2(p.intra_agreement) + "\"";
        proposals_text += " cluster=\"" + std::to_string(cluster_of[p.perturbation_index]) + "\"";
        proposals_text += " status=\"" + status_string(p.annotation) + "\"";
      }
      proposals_text += ">\n" + body_of(p) + "\n</PROPOSAL>";
    }
  }

  if (!with_evolution) {
    return PromptCatalog::substitute(catalog_.templ("aggregate_user_no_evolution"),
                                     {{"problem", problem.text}, {"proposals", proposals_text}});
  }
  return PromptCatalog::substitute(
      catalog_.templ("aggregate_user"),
      {{"problem", problem.text},
       {"proposals", proposals_text},
       {"consensus_evolution", render_consensus_evolution(record, kind)}});
}

AggregationResult Pipeline::phase3_aggregate(const Problem& problem,
                                             const std::vector<Proposal>& refined,
                                             const ConsensusRecord& record,
                                             CallCounts& calls) {
  const ProblemKind kind = problem.kind;
  ChatRequest req;
  req.agent = config_.aggregator;
  if (config_.ablation == Ablation::kQOnlyCot) {
    req.system_prompt = catalog_.proposer_system(kind);
  } else {
    req.system_prompt = PromptCatalog::substitute(
        catalog_.aggregate_system(kind),
        {{"n", std::to_string(config_.n)}, {"k", std::to_string(config_.k)}});
  }
  req.user_prompt = assemble_aggregate_user(problem, refined, record);

  ChatResponse resp = client_.complete(req);
  ++calls.aggregator;

  AggregationResult result;
  result.raw_text = resp.text;
  result.tokens_in = resp.tokens_in;
  result.tokens_out = resp.tokens_out;
  result.answer = extract_answer(resp.text, problem.answer_format_hint, kind);
  if (result.answer) {
    if (kind == ProblemKind::kQa) {
      result.score = 1.0;  // every extracted QA answer scores 1.0 for Phase 5
    } else {
      result.score = problem.public_tests.empty()
                         ? 0.0
                         : code_quality_score(result.answer->normalized, problem.public_tests,
                                              config_.exec);
    }
    MajoritySelection post = select_majority(record.clusters_post, config_.n);
    result.differs_from_majority =
        canonical_key(*result.answer) !=
        record.clusters_post[post.cluster_index].representative_key;
  }
  return result;
}

double Pipeline::override_score_of_proposal(const Proposal& p, ProblemKind kind) const {
  if (!p.scoreable()) return -1.0;
  // QA: any extracted answer scores 1.0, so the override can never fire.
  return kind == ProblemKind::kQa ? 1.0 : p.quality;
}

Pipeline::OverrideOutcome Pipeline::apply_override(const AggregationResult& agg,
                                                   const std::vector<Proposal>& proposals,
                                                   ProblemKind kind) const {
  OverrideOutcome out;
  const Proposal* best = nullptr;
  double best_score = -1.0;
  for (const auto& p : proposals) {
    double s = override_score_of_proposal(p, kind);
    if (s > best_score) {  // ties keep the lowest perturbation index
      best_score = s;
      best = &p;
    }
  }
  if (best && agg.answer && agg.score < best_score) {
    out.final_answer = best->answer;
    out.override_fired = true;
    out.chosen_perturbation = best->perturbation_index;
  } else {
    out.final_answer = agg.answer;
  }
  return out;
}

namespace {

const Proposal* best_cluster_member(const std::vector<Proposal>& proposals,
                                    const Cluster& cluster) {
  std::set<int> members(cluster.members.begin(), cluster.members.end());
  const Proposal* best = nullptr;
  for (const auto& p : proposals) {
    if (!p.scoreable() || !members.count(p.perturbation_index)) continue;
    if (!best || p.quality > best->quality) best = &p;
  }
  return best;
}

}  // namespace

void Pipeline::evaluate_correctness(const Problem& problem, RunRecord& record) const {
  if (problem.kind == ProblemKind::kQa) {
    if (!problem.gold) return;
    ExtractedAnswer gold = gold_answer(problem);
    if (record.final_answer)
      record.correct = canonical_key(*record.final_answer) == canonical_key(gold);
    else
      record.correct = false;
    if (record.vote_answer)
      record.correct_vote = canonical_key(*record.vote_answer) == canonical_key(gold);
  } else {
    auto all_pass = [&](const std::string& code, const std::vector<TestCase>& tests) {
      if (tests.empty()) return true;
      auto results = run_tests(code, tests, config_.exec);
      for (const auto& r : results)
        if (!r.passed) return false;
      return true;
    };
    if (record.final_answer) {
      record.final_public_all = all_pass(record.final_answer->normalized, problem.public_tests);
      if (!problem.private_tests.empty()) {
        record.final_private_all =
            all_pass(record.final_answer->normalized, problem.private_tests);
        record.correct = record.final_private_all;
      } else {
        record.correct = record.final_public_all;
      }
    } else {
      record.correct = false;
      record.final_public_all = false;
      if (!problem.private_tests.empty()) record.final_private_all = false;
    }
    if (record.vote_answer) {
      bool vote_priv = problem.private_tests.empty()
                           ? all_pass(record.vote_answer->normalized, problem.public_tests)
                           : all_pass(record.vote_answer->normalized, problem.private_tests);
      record.correct_vote = vote_priv;
    }
  }
}

RunRecord Pipeline::run_scmoa(const Problem& problem) {
  RunRecord rec;
  rec.problem_id = problem.id;
  rec.method = config_.theta ? "scmoa_gated" : "scmoa";
  rec.n = config_.n;
  rec.k = config_.k;
  rec.theta = config_.theta;
  rec.perturb_mode = config_.perturb_mode;
  rec.ablation = config_.ablation;
  rec.proposer_model = config_.proposer.model_id;
  rec.aggregator_model = config_.aggregator.model_id;
  rec.paraphraser_model = config_.paraphraser.model_id;
  rec.seed = config_.seed;

  PerturbCallStats perturb_stats;
  rec.perturbations =
      generate_perturbations(problem, config_.n, config_.perturb_mode, config_.paraphraser,
                             catalog_, client_, config_.perturb, &perturb_stats);
  rec.calls.paraphrase = perturb_stats.calls;
  rec.tokens_in += perturb_stats.tokens_in;
  rec.tokens_out += perturb_stats.tokens_out;

  rec.proposals_pre = phase1_propose(problem, rec.perturbations, rec.calls, rec.samples);
  for (const auto& s : rec.samples) {
    rec.tokens_in += s.tokens_in;
    rec.tokens_out += s.tokens_out;
  }

  bool any_scoreable = false;
  for (const auto& p : rec.proposals_pre) any_scoreable |= p.scoreable();
  if (!any_scoreable) {
    // Every sample failed extraction: explicit NoAnswer record, no guessing.
    rec.no_answer = true;
    rec.proposals_post = rec.proposals_pre;
    evaluate_correctness(problem, rec);
    return rec;
  }

  std::vector<Cluster> clusters_pre = cluster_proposals(rec.proposals_pre, problem.kind);
  MajoritySelection pre = select_majority(clusters_pre, config_.n);
  const Proposal* vote_best =
      best_cluster_member(rec.proposals_pre, clusters_pre[pre.cluster_index]);
  rec.vote_answer = vote_best->answer;
  rec.vote_best_perturbation = vote_best->perturbation_index;

  // Pre-refinement consensus gate (App-G semantics, default off via theta=inf).
  if (config_.theta && !config_.gate_post_refinement && pre.consensus >= *config_.theta) {
    rec.gated = true;
    rec.proposals_post = rec.proposals_pre;
    rec.consensus.clusters_pre = clusters_pre;
    rec.consensus.clusters_post = clusters_pre;
    rec.consensus.c_pre = pre.consensus;
    rec.consensus.c_post = pre.consensus;
    rec.consensus.majority_answer_pre = clusters_pre[pre.cluster_index].representative_key;
    for (const auto& p : rec.proposals_pre) rec.consensus.alphas.push_back(p.intra_agreement);
    rec.final_answer = vote_best->answer;
    evaluate_correctness(problem, rec);
    return rec;
  }

  RefineOutcome refined = phase2_refine(problem, rec.proposals_pre, rec.calls);
  rec.proposals_post = refined.proposals;
  rec.consensus = refined.record;
  rec.tokens_in += refined.tokens_in;
  rec.tokens_out += refined.tokens_out;

  // Alternative gate on post-refinement consensus, behind a config flag.
  if (config_.theta && config_.gate_post_refinement &&
      rec.consensus.c_post >= *config_.theta) {
    rec.gated = true;
    MajoritySelection post = select_majority(rec.consensus.clusters_post, config_.n);
    const Proposal* post_best =
        best_cluster_member(rec.proposals_post, rec.consensus.clusters_post[post.cluster_index]);
    rec.final_answer = post_best->answer;
    evaluate_correctness(problem, rec);
    return rec;
  }

  AggregationResult agg = phase3_aggregate(problem, rec.proposals_post, rec.consensus, rec.calls);
  rec.tokens_in += agg.tokens_in;
  rec.tokens_out += agg.tokens_out;
  rec.aggregate = agg;

  if (!agg.answer) {
    // Aggregator output was unextractable: fall back to the post-refinement
    // majority's best proposal and flag the record.
    rec.aggregator_extraction_failed = true;
    MajoritySelection post = select_majority(rec.consensus.clusters_post, config_.n);
    const Proposal* post_best =
        best_cluster_member(rec.proposals_post, rec.consensus.clusters_post[post.cluster_index]);
    rec.final_answer = post_best->answer;
  } else {
    OverrideOutcome outcome = apply_override(agg, rec.proposals_post, problem.kind);
    rec.final_answer = outcome.final_answer;
    rec.override_fired = outcome.override_fired;
  }
  evaluate_correctness(problem, rec);
  return rec;
}

RunRecord Pipeline::run_majority_vote(const Problem& problem) {
  RunRecord rec;
  rec.problem_id = problem.id;
  rec.method = "majority_vote";
  rec.n = config_.n;
  rec.k = config_.k;
  rec.theta = config_.theta;
  rec.perturb_mode = config_.perturb_mode;
  rec.ablation = config_.ablation;
  rec.proposer_model = config_.proposer.model_id;
  rec.aggregator_model = config_.aggregator.model_id;
  rec.paraphraser_model = config_.paraphraser.model_id;
  rec.seed = config_.seed;

  PerturbCallStats perturb_stats;
  rec.perturbations =
      generate_perturbations(problem, config_.n, config_.perturb_mode, config_.paraphraser,
                             catalog_, client_, config_.perturb, &perturb_stats);
  rec.calls.paraphrase = perturb_stats.calls;
  rec.tokens_in += perturb_stats.tokens_in;
  rec.tokens_out += perturb_stats.tokens_out;

  rec.proposals_pre = phase1_propose(problem, rec.perturbations, rec.calls, rec.samples);
  for (const auto& s : rec.samples) {
    rec.tokens_in += s.tokens_in;
    rec.tokens_out += s.tokens_out;
  }
  rec.proposals_post = rec.proposals_pre;

  bool any_scoreable = false;
  for (const auto& p : rec.proposals_pre) any_scoreable |= p.scoreable();
  if (!any_scoreable) {
    rec.no_answer = true;
    evaluate_correctness(problem, rec);
    return rec;
  }

  rec.consensus.clusters_pre = cluster_proposals(rec.proposals_pre, problem.kind);
  MajoritySelection pre = select_majority(rec.consensus.clusters_pre, config_.n);
  rec.consensus.clusters_post = rec.consensus.clusters_pre;
  rec.consensus.c_pre = pre.consensus;
  rec.consensus.c_post = pre.consensus;
  rec.consensus.majority_answer_pre =
      rec.consensus.clusters_pre[pre.cluster_index].representative_key;
  for (const auto& p : rec.proposals_pre) rec.consensus.alphas.push_back(p.intra_agreement);

  const Proposal* vote_best =
      best_cluster_member(rec.proposals_pre, rec.consensus.clusters_pre[pre.cluster_index]);
  rec.vote_answer = vote_best->answer;
  rec.vote_best_perturbation = vote_best->perturbation_index;
  rec.final_answer = vote_best->answer;
  evaluate_correctness(problem, rec);
  return rec;
}

}  // namespace scmoa
