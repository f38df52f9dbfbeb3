#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmoa/agents.hpp"
#include "scmoa/core.hpp"
#include "scmoa/prompts.hpp"

namespace scmoa {

enum class PerturbMode { kSpuqFreeform, kControlledTaxonomy, kPersona };

const char* to_string(PerturbMode m);
PerturbMode perturb_mode_from_string(const std::string& s);

struct Perturbation {
  int index = 0;  // 1..N
  std::string text;
  PerturbMode mode = PerturbMode::kSpuqFreeform;
  std::optional<std::string> controlled_type;
  bool validated = false;
  int regeneration_count = 0;
};

struct ProtectedTokenSet {
  std::vector<std::string> numbers;
  std::vector<std::string> code_blocks;
  std::vector<std::string> units;

  bool empty() const { return numbers.empty() && code_blocks.empty() && units.empty(); }
};

struct ValidationReport {
  bool passed = false;
  std::vector<std::string> missing;
};

struct PerturbOptions {
  int retry_cap = 3;  // regenerations per item before falling back to the original
  std::vector<std::string> extra_units;
};

struct PerturbCallStats {
  int calls = 0;
  int64_t tokens_in = 0;
  int64_t tokens_out = 0;
};

// Deterministic extraction of the tokens a rephrasing must keep verbatim:
// maximal number spans (decimals, signs, scientific notation), fenced code
// block bodies, and units from a fixed lexicon.
ProtectedTokenSet extract_protected_tokens(const std::string& problem_text,
                                           const std::vector<std::string>& extra_units = {});

// Passes iff every protected token occurs as a verbatim substring.
ValidationReport validate_paraphrase(const ProtectedTokenSet& original_tokens,
                                     const std::string& paraphrase);

// Pulls the first well-formed JSON array of strings out of a generator
// response, tolerating surrounding prose. Nullopt when none exists.
std::optional<std::vector<std::string>> parse_string_array(const std::string& text);

// Phase 0: N validated perturbations for one problem.
//   spuq:       one generator call returns a JSON list of N rephrasings
//   controlled: one call per perturbation, cycling the five operation types
//   persona:    the original text N times (personas supply the diversity)
// Items failing protected-token validation are regenerated individually up
// to opts.retry_cap, then fall back to the original text.
std::vector<Perturbation> generate_perturbations(const Problem& problem, int n,
                                                 PerturbMode mode, const AgentSpec& generator,
                                                 const PromptCatalog& catalog,
                                                 CachingClient& client,
                                                 const PerturbOptions& opts = {},
                                                 PerturbCallStats* stats = nullptr);

}  // namespace scmoa
