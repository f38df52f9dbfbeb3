#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scmoa/errors.hpp"

namespace scmoa {

enum class ProblemKind { kQa, kCode };

enum class Visibility { kPublic, kPrivate };

struct TestCase {
  std::string name;
  std::string stdin_data;
  std::string expected_stdout;
  Visibility visibility = Visibility::kPublic;
};

// One benchmark item. `gold` and `private_tests` exist for evaluation only
// and must never reach an assembled prompt.
struct Problem {
  std::string id;
  ProblemKind kind = ProblemKind::kQa;
  std::string text;
  std::string answer_format_hint;
  std::optional<std::string> gold;
  std::vector<TestCase> public_tests;
  std::vector<TestCase> private_tests;
};

enum class AnswerKind { kLabel, kInteger, kFreeText, kCode };

struct ExtractedAnswer {
  AnswerKind kind = AnswerKind::kFreeText;
  std::string normalized;  // lowercased/stripped for QA kinds, verbatim for code
  std::string raw_span;
};

struct Sample {
  int perturbation_index = 0;  // 1-based
  int sample_index = 0;        // 0-based within a perturbation
  std::string raw_text;
  std::string trace;
  std::optional<ExtractedAnswer> extracted;
  int64_t tokens_in = 0;
  int64_t tokens_out = 0;
};

enum class RefinementAnnotation { kNone, kUnchangedMajority, kAdopted, kImproved, kDefended };

struct Proposal {
  int perturbation_index = 0;
  Sample best_sample;
  std::optional<ExtractedAnswer> answer;  // absent => unscoreable, excluded from clustering
  double quality = 0.0;
  double intra_agreement = 1.0;  // alpha_i
  RefinementAnnotation annotation = RefinementAnnotation::kNone;
  // Code only: names of public tests this proposal passes, in test order.
  std::vector<std::string> passed_public;

  bool scoreable() const { return answer.has_value(); }
};

// Maps a free-form answer-format hint onto the extraction kind.
AnswerKind answer_kind_from_hint(const std::string& hint, ProblemKind kind);

// Parses the committed answer out of a raw model response.
// QA: the LAST line of the form `Answer: <value>`; code: the body of the
// LAST fenced code block. Returns nullopt when no such line/block exists
// (NoAnswerLine / NoFencedBlock), which marks the sample unscoreable.
std::optional<ExtractedAnswer> extract_answer(const std::string& raw,
                                              const std::string& answer_format_hint,
                                              ProblemKind kind);

// Everything before the extracted answer: for QA the response minus its
// final `Answer:` line, for code the full response.
std::string trace_of(const std::string& raw, ProblemKind kind);

// Canonical equivalence key: equal keys <=> equivalent answers. Integer
// answers canonicalize numerically (leading zeros and '+' dropped), all
// other QA kinds compare their normalized form, code compares verbatim.
std::string canonical_key(const ExtractedAnswer& a);

// Equivalence on extracted answers of the same kind; throws KindMismatch.
bool answers_equal(const ExtractedAnswer& a, const ExtractedAnswer& b);

// Builds the gold answer for a QA problem in the same normal form the
// extractor produces, so correctness checks share one equality.
ExtractedAnswer gold_answer(const Problem& p);

// String helpers shared across modules.
std::string to_lower(std::string s);
std::string strip(const std::string& s);
std::string collapse_whitespace(const std::string& s);

const char* to_string(ProblemKind k);
const char* to_string(AnswerKind k);
const char* to_string(RefinementAnnotation a);
ProblemKind problem_kind_from_string(const std::string& s);
AnswerKind answer_kind_from_string(const std::string& s);
RefinementAnnotation annotation_from_string(const std::string& s);

}  // namespace scmoa
