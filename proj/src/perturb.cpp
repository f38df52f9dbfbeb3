#include "scmoa/perturb.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

namespace scmoa {

using nlohmann::json;

const char* to_string(PerturbMode m) {
  switch (m) {
    case PerturbMode::kSpuqFreeform: return "spuq_freeform";
    case PerturbMode::kControlledTaxonomy: return "controlled_taxonomy";
    case PerturbMode::kPersona: return "persona";
  }
  return "spuq_freeform";
}

PerturbMode perturb_mode_from_string(const std::string& s) {
  if (s == "spuq_freeform" || s == "spuq") return PerturbMode::kSpuqFreeform;
  if (s == "controlled_taxonomy" || s == "controlled") return PerturbMode::kControlledTaxonomy;
  if (s == "persona") return PerturbMode::kPersona;
  throw Error(ErrorCode::kParseError, "unknown perturbation mode: " + s);
}

namespace {

const std::vector<std::string>& default_units() {
  static const std::vector<std::string> kUnits = {"eV", "m/s", "kg", "K",
                                                  "mol", "J",   "Hz", "nm", "°C"};
  return kUnits;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Maximal number span starting at `i`, or 0 when none starts here.
// Grammar: [sign] digits [. digits] [eE [sign] digits]; a sign counts only
// when it is not glued to a preceding word character or digit (so "3-4"
// yields "3" and "4", not "-4").
size_t number_span(const std::string& s, size_t i) {
  size_t j = i;
  if (s[j] == '+' || s[j] == '-') {
    if (i > 0 && (is_word_char(s[i - 1]) || s[i - 1] == '.')) return 0;
    ++j;
  }
  if (j >= s.size() || !is_digit(s[j])) return 0;
  while (j < s.size() && is_digit(s[j])) ++j;
  if (j + 1 < s.size() && s[j] == '.' && is_digit(s[j + 1])) {
    ++j;
    while (j < s.size() && is_digit(s[j])) ++j;
  }
  if (j < s.size() && (s[j] == 'e' || s[j] == 'E')) {
    size_t k = j + 1;
    if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
    if (k < s.size() && is_digit(s[k])) {
      ++k;
      while (k < s.size() && is_digit(s[k])) ++k;
      j = k;
    }
  }
  return j - i;
}

void push_unique(std::vector<std::string>& v, const std::string& s) {
  if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
}

std::string strip_fenced_blocks(const std::string& text,
                                std::vector<std::string>* blocks) {
  static const std::string kFence = "```";
  std::string rest;
  size_t pos = 0;
  while (true) {
    size_t open = text.find(kFence, pos);
    if (open == std::string::npos) {
      rest.append(text, pos, std::string::npos);
      break;
    }
    size_t close = text.find(kFence, open + kFence.size());
    if (close == std::string::npos) {
      rest.append(text, pos, std::string::npos);
      break;
    }
    rest.append(text, pos, open - pos);
    size_t body_begin = text.find('\n', open);
    if (body_begin == std::string::npos || body_begin > close) {
      body_begin = open + kFence.size();
    } else {
      body_begin += 1;
    }
    std::string body = text.substr(body_begin, close - body_begin);
    if (!body.empty() && body.back() == '\n') body.pop_back();
    if (blocks) push_unique(*blocks, body);
    pos = close + kFence.size();
  }
  return rest;
}

}  // namespace

ProtectedTokenSet extract_protected_tokens(const std::string& problem_text,
                                           const std::vector<std::string>& extra_units) {
  ProtectedTokenSet out;
  // Code blocks first: their contents are protected verbatim as blocks, and
  // keeping numbers inside them out of the number list avoids double counting.
  std::string prose = strip_fenced_blocks(problem_text, &out.code_blocks);

  for (size_t i = 0; i < prose.size();) {
    size_t len = number_span(prose, i);
    if (len > 0 && (i == 0 || !is_word_char(prose[i - 1]))) {
      push_unique(out.numbers, prose.substr(i, len));
      i += len;
    } else {
      ++i;
    }
  }

  std::vector<std::string> lexicon = default_units();
  for (const auto& u : extra_units) push_unique(lexicon, u);
  for (const auto& unit : lexicon) {
    size_t pos = 0;
    while ((pos = prose.find(unit, pos)) != std::string::npos) {
      bool left_ok = pos == 0 || !is_word_char(prose[pos - 1]);
      size_t end = pos + unit.size();
      bool right_ok = end >= prose.size() || !is_word_char(prose[end]);
      if (left_ok && right_ok) {
        push_unique(out.units, unit);
        break;
      }
      pos = end;
    }
  }
  return out;
}

ValidationReport validate_paraphrase(const ProtectedTokenSet& original_tokens,
                                     const std::string& paraphrase) {
  ValidationReport report;
  auto check = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (paraphrase.find(t) == std::string::npos) report.missing.push_back(t);
    }
  };
  check(original_tokens.numbers);
  check(original_tokens.code_blocks);
  check(original_tokens.units);
  report.passed = report.missing.empty();
  return report;
}

std::optional<std::vector<std::string>> parse_string_array(const std::string& text) {
  // The generator is asked for a bare JSON list but may wrap it in prose;
  // try every [...] span until one parses as an array of strings.
  size_t open = 0;
  while ((open = text.find('[', open)) != std::string::npos) {
    size_t close = open;
    while ((close = text.find(']', close + 1)) != std::string::npos) {
      json parsed = json::parse(text.substr(open, close - open + 1), nullptr, false);
      if (parsed.is_discarded()) continue;
      if (!parsed.is_array()) break;
      std::vector<std::string> out;
      bool ok = true;
      for (const auto& item : parsed) {
        if (!item.is_string()) {
          ok = false;
          break;
        }
        out.push_back(item.get<std::string>());
      }
      if (ok) return out;
      break;
    }
    ++open;
  }
  return std::nullopt;
}

namespace {

struct GeneratorContext {
  const Problem& problem;
  const AgentSpec& generator;
  const PromptCatalog& catalog;
  CachingClient& client;
  PerturbCallStats* stats;

  ChatResponse complete(const ChatRequest& req) const {
    ChatResponse resp = client.complete(req);
    if (stats) {
      ++stats->calls;
      stats->tokens_in += resp.tokens_in;
      stats->tokens_out += resp.tokens_out;
    }
    return resp;
  }
};

// One-item regeneration: the SPUQ prompt with n=1 plus a retry comment so
// each attempt gets a fresh content hash.
std::optional<std::string> regenerate_item(const GeneratorContext& ctx, int index,
                                           int attempt) {
  ChatRequest req;
  req.agent = ctx.generator;
  req.system_prompt =
      PromptCatalog::substitute(ctx.catalog.spuq_system(), {{"n", "1"}});
  req.user_prompt = ctx.problem.text + "\n\n<!-- paraphrase retry: " +
                    std::to_string(index) + "-" + std::to_string(attempt) + " -->";
  ChatResponse resp = ctx.complete(req);
  auto items = parse_string_array(resp.text);
  if (!items || items->empty()) return std::nullopt;
  return items->front();
}

std::string controlled_rewrite(const GeneratorContext& ctx, const ControlledOperation& op,
                               int index, int attempt) {
  ChatRequest req;
  req.agent = ctx.generator;
  req.system_prompt = PromptCatalog::substitute(
      ctx.catalog.controlled_system(),
      {{"operation", op.name}, {"operation_instruction", op.instruction}});
  req.user_prompt = ctx.problem.text;
  if (attempt > 0) {
    req.user_prompt += "\n\n<!-- paraphrase retry: " + std::to_string(index) + "-" +
                       std::to_string(attempt) + " -->";
  }
  return strip(ctx.complete(req).text);
}

}  // namespace

std::vector<Perturbation> generate_perturbations(const Problem& problem, int n,
                                                 PerturbMode mode, const AgentSpec& generator,
                                                 const PromptCatalog& catalog,
                                                 CachingClient& client,
                                                 const PerturbOptions& opts,
                                                 PerturbCallStats* stats) {
  if (n < 1) throw Error(ErrorCode::kConfigError, "perturbation count must be >= 1");
  ProtectedTokenSet tokens = extract_protected_tokens(problem.text, opts.extra_units);
  GeneratorContext ctx{problem, generator, catalog, client, stats};

  std::vector<Perturbation> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].index = i + 1;
    out[i].mode = mode;
  }

  if (mode == PerturbMode::kPersona) {
    for (auto& p : out) {
      p.text = problem.text;
      p.validated = true;
    }
    return out;
  }

  if (mode == PerturbMode::kControlledTaxonomy) {
    const auto& ops = catalog.controlled_operations();
    for (int i = 0; i < n; ++i) {
      const ControlledOperation& op = ops[i % ops.size()];
      out[i].controlled_type = op.name;
      std::string candidate = controlled_rewrite(ctx, op, i + 1, 0);
      int attempt = 0;
      while (!validate_paraphrase(tokens, candidate).passed && attempt < opts.retry_cap) {
        ++attempt;
        candidate = controlled_rewrite(ctx, op, i + 1, attempt);
      }
      out[i].regeneration_count = attempt;
      if (validate_paraphrase(tokens, candidate).passed) {
        out[i].text = candidate;
      } else {
        out[i].text = problem.text;  // fallback keeps the pipeline moving
      }
      out[i].validated = true;
    }
    return out;
  }

  // SPUQ free-form: a single call yields all N rephrasings.
  std::vector<std::string> items;
  int batch_attempt = 0;
  while (true) {
    ChatRequest req;
    req.agent = generator;
    req.system_prompt =
        PromptCatalog::substitute(catalog.spuq_system(), {{"n", std::to_string(n)}});
    req.user_prompt = problem.text;
    if (batch_attempt > 0) {
      req.user_prompt +=
          "\n\n<!-- paraphrase retry: batch-" + std::to_string(batch_attempt) + " -->";
    }
    ChatResponse resp = ctx.complete(req);
    auto parsed = parse_string_array(resp.text);
    if (parsed && static_cast<int>(parsed->size()) >= n) {
      items.assign(parsed->begin(), parsed->begin() + n);
      break;
    }
    // GeneratorMalformedOutput: retried with a fresh hash, then fall back.
    if (++batch_attempt > opts.retry_cap) {
      items.assign(n, problem.text);
      break;
    }
  }

  for (int i = 0; i < n; ++i) {
    std::string candidate = items[i];
    int attempt = 0;
    while (!validate_paraphrase(tokens, candidate).passed && attempt < opts.retry_cap) {
      ++attempt;
      auto regen = regenerate_item(ctx, i + 1, attempt);
      if (regen) candidate = *regen;
    }
    out[i].regeneration_count = attempt;
    if (validate_paraphrase(tokens, candidate).passed) {
      out[i].text = candidate;
    } else {
      out[i].text = problem.text;
    }
    out[i].validated = true;
  }
  return out;
}

}  // namespace scmoa
