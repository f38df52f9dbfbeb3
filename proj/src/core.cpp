#include "scmoa/core.hpp"

#include <algorithm>
#include <cctype>

namespace scmoa {

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string strip(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n\f\v");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(b, e - b + 1);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(' ');
    in_ws = false;
    out.push_back(static_cast<char>(c));
  }
  return out;
}

AnswerKind answer_kind_from_hint(const std::string& hint, ProblemKind kind) {
  if (kind == ProblemKind::kCode) return AnswerKind::kCode;
  std::string h = to_lower(hint);
  if (h.find("integer") != std::string::npos) return AnswerKind::kInteger;
  if (h.find("choice") != std::string::npos || h.find("label") != std::string::npos)
    return AnswerKind::kLabel;
  return AnswerKind::kFreeText;
}

namespace {

// Last line of the form `Answer: <value>`. Leading whitespace before the
// marker is tolerated; the value is the rest of that line.
std::optional<std::string> last_answer_line_value(const std::string& raw) {
  static const std::string kMarker = "Answer:";
  std::optional<std::string> value;
  size_t pos = 0;
  while (pos <= raw.size()) {
    size_t eol = raw.find('\n', pos);
    size_t len = (eol == std::string::npos ? raw.size() : eol) - pos;
    std::string line = raw.substr(pos, len);
    std::string trimmed = strip(line);
    if (trimmed.rfind(kMarker, 0) == 0) {
      value = strip(trimmed.substr(kMarker.size()));
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return value;
}

// Byte offset just past the last `Answer:` line, used to cut the trace.
size_t last_answer_line_start(const std::string& raw) {
  static const std::string kMarker = "Answer:";
  size_t result = std::string::npos;
  size_t pos = 0;
  while (pos <= raw.size()) {
    size_t eol = raw.find('\n', pos);
    size_t len = (eol == std::string::npos ? raw.size() : eol) - pos;
    std::string trimmed = strip(raw.substr(pos, len));
    if (trimmed.rfind(kMarker, 0) == 0) result = pos;
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return result;
}

// Body of the LAST ``` fenced block. An info string on the opening fence
// (```python) is not part of the body. Returns nullopt when no complete
// fenced block exists.
std::optional<std::string> last_fenced_block(const std::string& raw) {
  static const std::string kFence = "```";
  std::vector<size_t> fences;
  size_t pos = 0;
  while ((pos = raw.find(kFence, pos)) != std::string::npos) {
    fences.push_back(pos);
    pos += kFence.size();
  }
  if (fences.size() < 2) return std::nullopt;
  size_t pairs = fences.size() / 2;
  size_t open = fences[2 * pairs - 2];
  size_t close = fences[2 * pairs - 1];
  size_t body_begin = raw.find('\n', open);
  if (body_begin == std::string::npos || body_begin > close) {
    body_begin = open + kFence.size();  // one-line block: ```x```
  } else {
    body_begin += 1;
  }
  std::string body = raw.substr(body_begin, close - body_begin);
  if (!body.empty() && body.back() == '\n') body.pop_back();
  return body;
}

std::string canonical_integer(const std::string& normalized) {
  std::string s = normalized;
  bool negative = false;
  size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    negative = s[i] == '-';
    ++i;
  }
  if (i >= s.size() || s.find_first_not_of("0123456789", i) != std::string::npos) {
    return s;  // not a plain integer; fall back to string comparison
  }
  while (i + 1 < s.size() && s[i] == '0') ++i;
  std::string digits = s.substr(i);
  if (digits == "0") return "0";
  return negative ? "-" + digits : digits;
}

}  // namespace

std::optional<ExtractedAnswer> extract_answer(const std::string& raw,
                                              const std::string& answer_format_hint,
                                              ProblemKind kind) {
  if (kind == ProblemKind::kCode) {
    auto body = last_fenced_block(raw);
    if (!body) return std::nullopt;  // NoFencedBlock
    ExtractedAnswer a;
    a.kind = AnswerKind::kCode;
    a.normalized = *body;  // verbatim
    a.raw_span = *body;
    return a;
  }
  auto value = last_answer_line_value(raw);
  if (!value || value->empty()) return std::nullopt;  // NoAnswerLine
  ExtractedAnswer a;
  a.kind = answer_kind_from_hint(answer_format_hint, kind);
  a.raw_span = *value;
  a.normalized = collapse_whitespace(to_lower(strip(*value)));
  return a;
}

std::string trace_of(const std::string& raw, ProblemKind kind) {
  if (kind == ProblemKind::kCode) return raw;
  size_t cut = last_answer_line_start(raw);
  if (cut == std::string::npos) return raw;
  std::string t = raw.substr(0, cut);
  while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
  return t;
}

std::string canonical_key(const ExtractedAnswer& a) {
  if (a.kind == AnswerKind::kInteger) return canonical_integer(a.normalized);
  return a.normalized;
}

bool answers_equal(const ExtractedAnswer& a, const ExtractedAnswer& b) {
  if (a.kind != b.kind)
    throw Error(ErrorCode::kKindMismatch, "cannot compare answers of different kinds");
  return canonical_key(a) == canonical_key(b);
}

ExtractedAnswer gold_answer(const Problem& p) {
  ExtractedAnswer a;
  a.kind = answer_kind_from_hint(p.answer_format_hint, p.kind);
  a.raw_span = p.gold.value_or("");
  a.normalized = collapse_whitespace(to_lower(strip(a.raw_span)));
  return a;
}

const char* to_string(ProblemKind k) {
  return k == ProblemKind::kQa ? "qa" : "code";
}

const char* to_string(AnswerKind k) {
  switch (k) {
    case AnswerKind::kLabel: return "label";
    case AnswerKind::kInteger: return "integer";
    case AnswerKind::kFreeText: return "free_text";
    case AnswerKind::kCode: return "code";
  }
  return "free_text";
}

const char* to_string(RefinementAnnotation a) {
  switch (a) {
    case RefinementAnnotation::kNone: return "none";
    case RefinementAnnotation::kUnchangedMajority: return "unchanged_majority";
    case RefinementAnnotation::kAdopted: return "adopted";
    case RefinementAnnotation::kImproved: return "improved";
    case RefinementAnnotation::kDefended: return "defended";
  }
  return "none";
}

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "qa") return ProblemKind::kQa;
  if (s == "code") return ProblemKind::kCode;
  throw Error(ErrorCode::kParseError, "unknown problem kind: " + s);
}

AnswerKind answer_kind_from_string(const std::string& s) {
  if (s == "label") return AnswerKind::kLabel;
  if (s == "integer") return AnswerKind::kInteger;
  if (s == "free_text") return AnswerKind::kFreeText;
  if (s == "code") return AnswerKind::kCode;
  throw Error(ErrorCode::kParseError, "unknown answer kind: " + s);
}

RefinementAnnotation annotation_from_string(const std::string& s) {
  if (s == "none") return RefinementAnnotation::kNone;
  if (s == "unchanged_majority") return RefinementAnnotation::kUnchangedMajority;
  if (s == "adopted") return RefinementAnnotation::kAdopted;
  if (s == "improved") return RefinementAnnotation::kImproved;
  if (s == "defended") return RefinementAnnotation::kDefended;
  throw Error(ErrorCode::kParseError, "unknown refinement annotation: " + s);
}

}  // namespace scmoa
