#include "scmoa/record_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace scmoa {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << content;
}

namespace {

json tests_to_json(const std::vector<TestCase>& tests) {
  json arr = json::array();
  for (const auto& t : tests) {
    arr.push_back(json{{"name", t.name},
                       {"stdin", t.stdin_data},
                       {"expected_stdout", t.expected_stdout}});
  }
  return arr;
}

std::vector<TestCase> tests_from_json(const json& arr, Visibility vis) {
  std::vector<TestCase> out;
  for (const auto& t : arr) {
    TestCase tc;
    tc.name = t.at("name").get<std::string>();
    tc.stdin_data = t.value("stdin", "");
    tc.expected_stdout = t.value("expected_stdout", "");
    tc.visibility = vis;
    out.push_back(std::move(tc));
  }
  return out;
}

json answer_to_json(const ExtractedAnswer& a) {
  return json{{"kind", to_string(a.kind)},
              {"normalized", a.normalized},
              {"raw_span", a.raw_span}};
}

ExtractedAnswer answer_from_json(const json& j) {
  ExtractedAnswer a;
  a.kind = answer_kind_from_string(j.at("kind").get<std::string>());
  a.normalized = j.at("normalized").get<std::string>();
  a.raw_span = j.at("raw_span").get<std::string>();
  return a;
}

json sample_to_json(const Sample& s) {
  json j{{"perturbation_index", s.perturbation_index},
         {"sample_index", s.sample_index},
         {"raw_text", s.raw_text},
         {"trace", s.trace},
         {"tokens_in", s.tokens_in},
         {"tokens_out", s.tokens_out}};
  j["extracted"] = s.extracted ? answer_to_json(*s.extracted) : json(nullptr);
  return j;
}

Sample sample_from_json(const json& j) {
  Sample s;
  s.perturbation_index = j.at("perturbation_index").get<int>();
  s.sample_index = j.at("sample_index").get<int>();
  s.raw_text = j.at("raw_text").get<std::string>();
  s.trace = j.at("trace").get<std::string>();
  s.tokens_in = j.at("tokens_in").get<int64_t>();
  s.tokens_out = j.at("tokens_out").get<int64_t>();
  if (!j.at("extracted").is_null()) s.extracted = answer_from_json(j["extracted"]);
  return s;
}

json proposal_to_json(const Proposal& p) {
  json j{{"perturbation_index", p.perturbation_index},
         {"best_sample", sample_to_json(p.best_sample)},
         {"quality", p.quality},
         {"intra_agreement", p.intra_agreement},
         {"annotation", to_string(p.annotation)},
         {"passed_public", p.passed_public}};
  j["answer"] = p.answer ? answer_to_json(*p.answer) : json(nullptr);
  return j;
}

Proposal proposal_from_json(const json& j) {
  Proposal p;
  p.perturbation_index = j.at("perturbation_index").get<int>();
  p.best_sample = sample_from_json(j.at("best_sample"));
  p.quality = j.at("quality").get<double>();
  p.intra_agreement = j.at("intra_agreement").get<double>();
  p.annotation = annotation_from_string(j.at("annotation").get<std::string>());
  p.passed_public = j.at("passed_public").get<std::vector<std::string>>();
  if (!j.at("answer").is_null()) p.answer = answer_from_json(j["answer"]);
  return p;
}

json perturbation_to_json(const Perturbation& p) {
  json j{{"index", p.index},
         {"text", p.text},
         {"mode", to_string(p.mode)},
         {"validated", p.validated},
         {"regeneration_count", p.regeneration_count}};
  j["controlled_type"] = p.controlled_type ? json(*p.controlled_type) : json(nullptr);
  return j;
}

Perturbation perturbation_from_json(const json& j) {
  Perturbation p;
  p.index = j.at("index").get<int>();
  p.text = j.at("text").get<std::string>();
  p.mode = perturb_mode_from_string(j.at("mode").get<std::string>());
  p.validated = j.at("validated").get<bool>();
  p.regeneration_count = j.at("regeneration_count").get<int>();
  if (!j.at("controlled_type").is_null())
    p.controlled_type = j["controlled_type"].get<std::string>();
  return p;
}

json cluster_to_json(const Cluster& c) {
  json j{{"label", c.label},
         {"members", c.members},
         {"representative_key", c.representative_key},
         {"representative_signature", c.representative_signature},
         {"size", c.size},
         {"mean_quality", c.mean_quality}};
  j["representative_answer"] =
      c.representative_answer ? answer_to_json(*c.representative_answer) : json(nullptr);
  return j;
}

Cluster cluster_from_json(const json& j) {
  Cluster c;
  c.label = j.at("label").get<int>();
  c.members = j.at("members").get<std::vector<int>>();
  c.representative_key = j.at("representative_key").get<std::string>();
  c.representative_signature =
      j.at("representative_signature").get<std::vector<std::string>>();
  c.size = j.at("size").get<int>();
  c.mean_quality = j.at("mean_quality").get<double>();
  if (!j.at("representative_answer").is_null())
    c.representative_answer = answer_from_json(j["representative_answer"]);
  return c;
}

json consensus_to_json(const ConsensusRecord& r) {
  json pre = json::array(), post = json::array();
  for (const auto& c : r.clusters_pre) pre.push_back(cluster_to_json(c));
  for (const auto& c : r.clusters_post) post.push_back(cluster_to_json(c));
  json actions = json::object();
  for (const auto& [index, action] : r.actions)
    actions[std::to_string(index)] = to_string(action);
  return json{{"clusters_pre", pre},
              {"clusters_post", post},
              {"c_pre", r.c_pre},
              {"c_post", r.c_post},
              {"majority_answer_pre", r.majority_answer_pre},
              {"actions", actions},
              {"alphas", r.alphas}};
}

ConsensusRecord consensus_from_json(const json& j) {
  ConsensusRecord r;
  for (const auto& c : j.at("clusters_pre")) r.clusters_pre.push_back(cluster_from_json(c));
  for (const auto& c : j.at("clusters_post")) r.clusters_post.push_back(cluster_from_json(c));
  r.c_pre = j.at("c_pre").get<double>();
  r.c_post = j.at("c_post").get<double>();
  r.majority_answer_pre = j.at("majority_answer_pre").get<std::string>();
  for (const auto& [key, value] : j.at("actions").items())
    r.actions[std::stoi(key)] = annotation_from_string(value.get<std::string>());
  r.alphas = j.at("alphas").get<std::vector<double>>();
  return r;
}

json optional_bool(const std::optional<bool>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<bool> optional_bool_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<bool>();
}

}  // namespace

json problem_to_json(const Problem& p) {
  json j{{"id", p.id},
         {"kind", to_string(p.kind)},
         {"text", p.text},
         {"answer_format_hint", p.answer_format_hint}};
  if (p.gold) j["gold"] = *p.gold;
  if (p.kind == ProblemKind::kCode) {
    j["tests"] = json{{"public", tests_to_json(p.public_tests)},
                      {"private", tests_to_json(p.private_tests)}};
  }
  return j;
}

Problem problem_from_json(const json& j) {
  Problem p;
  p.id = j.at("id").get<std::string>();
  if (!j.contains("kind")) throw Error(ErrorCode::kParseError, "problem missing 'kind'");
  p.kind = problem_kind_from_string(j.at("kind").get<std::string>());
  p.text = j.at("text").get<std::string>();
  p.answer_format_hint = j.value("answer_format_hint", "");
  if (j.contains("gold") && !j["gold"].is_null()) p.gold = j["gold"].get<std::string>();
  if (j.contains("tests")) {
    p.public_tests = tests_from_json(j["tests"].value("public", json::array()),
                                     Visibility::kPublic);
    p.private_tests = tests_from_json(j["tests"].value("private", json::array()),
                                      Visibility::kPrivate);
  }
  if (p.kind == ProblemKind::kCode && p.public_tests.empty())
    throw Error(ErrorCode::kParseError, "code problem " + p.id + " has no public tests");
  {
    std::set<std::string> names;
    for (const auto& t : p.public_tests) names.insert(t.name);
    for (const auto& t : p.private_tests) names.insert(t.name);
    if (names.size() != p.public_tests.size() + p.private_tests.size())
      throw Error(ErrorCode::kParseError, "problem " + p.id + " has duplicate test names");
  }
  return p;
}

std::vector<Problem> load_benchmark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open benchmark: " + path);
  std::vector<Problem> problems;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(ErrorCode::kParseError,
                  path + ":" + std::to_string(line_no) + ": invalid JSON");
    Problem p;
    try {
      p = problem_from_json(j);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kParseError,
                  path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(p.id).second)
      throw Error(ErrorCode::kDuplicateId,
                  path + ":" + std::to_string(line_no) + ": duplicate id " + p.id);
    problems.push_back(std::move(p));
  }
  return problems;
}

json record_to_json(const RunRecord& r) {
  json j;
  j["schema"] = r.schema;
  j["problem_id"] = r.problem_id;
  j["method"] = r.method;
  j["config"] = json{{"n", r.n},
                     {"k", r.k},
                     {"theta", r.theta ? json(*r.theta) : json("inf")},
                     {"perturb_mode", to_string(r.perturb_mode)},
                     {"ablation", to_string(r.ablation)},
                     {"proposer_model", r.proposer_model},
                     {"aggregator_model", r.aggregator_model},
                     {"paraphraser_model", r.paraphraser_model},
                     {"seed", r.seed}};
  json perturbations = json::array();
  for (const auto& p : r.perturbations) perturbations.push_back(perturbation_to_json(p));
  j["perturbations"] = perturbations;
  json samples = json::array();
  for (const auto& s : r.samples) samples.push_back(sample_to_json(s));
  j["samples"] = samples;
  json pre = json::array(), post = json::array();
  for (const auto& p : r.proposals_pre) pre.push_back(proposal_to_json(p));
  for (const auto& p : r.proposals_post) post.push_back(proposal_to_json(p));
  j["proposals_pre"] = pre;
  j["proposals_post"] = post;
  j["consensus"] = consensus_to_json(r.consensus);
  if (r.aggregate) {
    json agg{{"raw_text", r.aggregate->raw_text},
             {"score", r.aggregate->score},
             {"differs_from_majority", r.aggregate->differs_from_majority},
             {"tokens_in", r.aggregate->tokens_in},
             {"tokens_out", r.aggregate->tokens_out}};
    agg["answer"] = r.aggregate->answer ? answer_to_json(*r.aggregate->answer) : json(nullptr);
    j["aggregate"] = agg;
  } else {
    j["aggregate"] = nullptr;
  }
  j["gated"] = r.gated;
  j["override_fired"] = r.override_fired;
  j["no_answer"] = r.no_answer;
  j["aggregator_extraction_failed"] = r.aggregator_extraction_failed;
  j["vote_answer"] = r.vote_answer ? answer_to_json(*r.vote_answer) : json(nullptr);
  j["vote_best_perturbation"] = r.vote_best_perturbation;
  j["final_answer"] = r.final_answer ? answer_to_json(*r.final_answer) : json(nullptr);
  j["correct"] = optional_bool(r.correct);
  j["correct_vote"] = optional_bool(r.correct_vote);
  j["final_public_all"] = optional_bool(r.final_public_all);
  j["final_private_all"] = optional_bool(r.final_private_all);
  j["tokens_in"] = r.tokens_in;
  j["tokens_out"] = r.tokens_out;
  j["calls"] = json{{"paraphrase", r.calls.paraphrase},
                    {"proposer", r.calls.proposer},
                    {"refiner", r.calls.refiner},
                    {"aggregator", r.calls.aggregator},
                    {"raw_total", r.calls.raw_total()},
                    {"paper_convention", r.calls.paper_convention()}};
  return j;
}

RunRecord record_from_json(const json& j) {
  RunRecord r;
  r.schema = j.at("schema").get<int>();
  if (r.schema != 1)
    throw Error(ErrorCode::kParseError, "unsupported record schema " + std::to_string(r.schema));
  r.problem_id = j.at("problem_id").get<std::string>();
  r.method = j.at("method").get<std::string>();
  const json& cfg = j.at("config");
  r.n = cfg.at("n").get<int>();
  r.k = cfg.at("k").get<int>();
  if (!cfg.at("theta").is_string()) r.theta = cfg.at("theta").get<double>();
  r.perturb_mode = perturb_mode_from_string(cfg.at("perturb_mode").get<std::string>());
  r.ablation = ablation_from_string(cfg.at("ablation").get<std::string>());
  r.proposer_model = cfg.at("proposer_model").get<std::string>();
  r.aggregator_model = cfg.at("aggregator_model").get<std::string>();
  r.paraphraser_model = cfg.at("paraphraser_model").get<std::string>();
  r.seed = cfg.at("seed").get<uint64_t>();
  for (const auto& p : j.at("perturbations")) r.perturbations.push_back(perturbation_from_json(p));
  for (const auto& s : j.at("samples")) r.samples.push_back(sample_from_json(s));
  for (const auto& p : j.at("proposals_pre")) r.proposals_pre.push_back(proposal_from_json(p));
  for (const auto& p : j.at("proposals_post")) r.proposals_post.push_back(proposal_from_json(p));
  r.consensus = consensus_from_json(j.at("consensus"));
  if (!j.at("aggregate").is_null()) {
    const json& agg = j["aggregate"];
    AggregationResult a;
    a.raw_text = agg.at("raw_text").get<std::string>();
    a.score = agg.at("score").get<double>();
    a.differs_from_majority = agg.at("differs_from_majority").get<bool>();
    a.tokens_in = agg.at("tokens_in").get<int64_t>();
    a.tokens_out = agg.at("tokens_out").get<int64_t>();
    if (!agg.at("answer").is_null()) a.answer = answer_from_json(agg["answer"]);
    r.aggregate = a;
  }
  r.gated = j.at("gated").get<bool>();
  r.override_fired = j.at("override_fired").get<bool>();
  r.no_answer = j.at("no_answer").get<bool>();
  r.aggregator_extraction_failed = j.at("aggregator_extraction_failed").get<bool>();
  if (!j.at("vote_answer").is_null()) r.vote_answer = answer_from_json(j["vote_answer"]);
  r.vote_best_perturbation = j.at("vote_best_perturbation").get<int>();
  if (!j.at("final_answer").is_null()) r.final_answer = answer_from_json(j["final_answer"]);
  r.correct = optional_bool_from(j, "correct");
  r.correct_vote = optional_bool_from(j, "correct_vote");
  r.final_public_all = optional_bool_from(j, "final_public_all");
  r.final_private_all = optional_bool_from(j, "final_private_all");
  r.tokens_in = j.at("tokens_in").get<int64_t>();
  r.tokens_out = j.at("tokens_out").get<int64_t>();
  const json& calls = j.at("calls");
  r.calls.paraphrase = calls.at("paraphrase").get<int>();
  r.calls.proposer = calls.at("proposer").get<int>();
  r.calls.refiner = calls.at("refiner").get<int>();
  r.calls.aggregator = calls.at("aggregator").get<int>();
  return r;
}

void write_records(const std::string& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  for (const auto& r : records) {
    out << record_to_json(r).dump() << "\n";
  }
}

std::vector<RunRecord> read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open records: " + path);
  std::vector<RunRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw Error(ErrorCode::kParseError,
                  path + ":" + std::to_string(line_no) + ": invalid JSON");
    records.push_back(record_from_json(j));
  }
  return records;
}

}  // namespace scmoa
