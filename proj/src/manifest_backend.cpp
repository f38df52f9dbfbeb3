#include "scmoa/manifest_backend.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace scmoa {

using nlohmann::json;

FixtureManifest FixtureManifest::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open manifest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

FixtureManifest FixtureManifest::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("fixture manifest: ") + e.what());
  }
  FixtureManifest m;
  if (j.contains("expected")) {
    m.expected_vote_accuracy = j["expected"].value("vote_accuracy", 0.0);
    m.expected_scmoa_accuracy = j["expected"].value("scmoa_accuracy", 0.0);
  }
  for (const auto& p : j.at("problems")) {
    ManifestProblem mp;
    mp.id = p.at("id").get<std::string>();
    mp.text = p.at("text").get<std::string>();
    if (p.contains("paraphrases"))
      mp.paraphrases = p["paraphrases"].get<std::vector<std::string>>();
    if (p.contains("samples")) {
      for (const auto& [key, value] : p["samples"].items())
        mp.samples[std::stoi(key)] = value.get<std::vector<std::string>>();
    }
    if (p.contains("refine")) {
      for (const auto& [key, value] : p["refine"].items())
        mp.refine[std::stoi(key)] = value.get<std::string>();
    }
    mp.aggregate = p.value("aggregate", "");
    if (p.contains("q_only")) mp.q_only = p["q_only"].get<std::string>();
    m.problems.push_back(std::move(mp));
  }
  return m;
}

ManifestBackend::ManifestBackend(FixtureManifest manifest) : manifest_(std::move(manifest)) {}

ChatResponse ManifestBackend::respond(const std::string& text, const ChatRequest& req) const {
  auto word_count = [](const std::string& s) {
    std::istringstream in(s);
    std::string w;
    int64_t n = 0;
    while (in >> w) ++n;
    return n;
  };
  ChatResponse resp;
  resp.text = text;
  resp.tokens_in = word_count(req.system_prompt) + word_count(req.user_prompt);
  resp.tokens_out = word_count(text);
  resp.from_cache = false;
  return resp;
}

const ManifestProblem& ManifestBackend::problem_for_user_prompt(const std::string& user) const {
  for (const auto& p : manifest_.problems) {
    if (user.find(p.text) != std::string::npos) return p;
    for (const auto& para : p.paraphrases) {
      if (!para.empty() && user.find(para) != std::string::npos) return p;
    }
  }
  throw Error(ErrorCode::kMissingFixture,
              "manifest backend cannot match any problem in prompt: " +
                  user.substr(0, std::min<size_t>(user.size(), 120)));
}

ChatResponse ManifestBackend::complete(const ChatRequest& req) {
  const std::string& sys = req.system_prompt;
  const std::string& user = req.user_prompt;
  const ManifestProblem& p = problem_for_user_prompt(user);

  // Phase 0: paraphrase generation (free-form batch or controlled rewrite).
  if (sys.find("You rewrite problems") != std::string::npos) {
    if (sys.find("JSON list") != std::string::npos) {
      return respond(json(p.paraphrases).dump(), req);
    }
    // Controlled mode names its operation in the system prompt; the
    // operations cycle in catalog order, so the name maps to an index.
    static const std::vector<std::string> kOps = {"lexical", "syntactic", "discourse",
                                                  "register", "compression"};
    size_t op_index = 0;
    for (size_t i = 0; i < kOps.size(); ++i) {
      if (sys.find("Operation: " + kOps[i] + " ---") != std::string::npos) {
        op_index = i;
        break;
      }
    }
    if (op_index < p.paraphrases.size()) return respond(p.paraphrases[op_index], req);
    return respond(p.paraphrases.empty() ? p.text : p.paraphrases.front(), req);
  }

  // Phase 2: anchored refinement. Only the YOUR_PROPOSAL block identifies
  // the minority; the majority's text also appears in the prompt.
  if (sys.find("reviewing your") != std::string::npos) {
    std::string proposal_block;
    size_t open = user.find("<YOUR_PROPOSAL");
    size_t close = user.find("</YOUR_PROPOSAL>");
    if (open != std::string::npos && close != std::string::npos) {
      proposal_block = user.substr(open, close - open);
    }
    for (const auto& [index, samples] : p.samples) {
      for (const auto& sample_text : samples) {
        if (!sample_text.empty() && proposal_block.find(sample_text) != std::string::npos) {
          auto it = p.refine.find(index);
          if (it == p.refine.end()) {
            throw Error(ErrorCode::kMissingFixture,
                        p.id + ": no refine fixture for perturbation " +
                            std::to_string(index));
          }
          return respond(it->second, req);
        }
      }
    }
    throw Error(ErrorCode::kMissingFixture,
                p.id + ": refine request matches no known sample");
  }

  // Phase 3: aggregation (or the bare-problem re-solve conditions).
  if (sys.find("synthesising a final") != std::string::npos) {
    if (user.find("<PROPOSALS>") == std::string::npos && p.q_only) {
      return respond(*p.q_only, req);
    }
    return respond(p.aggregate, req);
  }

  // Phase 1: proposer call. The perturbation is identified by its text and
  // the sample index by the variant tag (absent tag means j = 0).
  int sample_index = 0;
  {
    static const std::string kTagPrefix = "<!-- sample variant: ";
    size_t tag = user.rfind(kTagPrefix);
    if (tag != std::string::npos) {
      size_t end = user.find(" -->", tag);
      std::string tag_body = user.substr(tag + kTagPrefix.size(),
                                         end - tag - kTagPrefix.size());
      size_t dash = tag_body.rfind('-');
      sample_index = std::stoi(tag_body.substr(dash + 1));
    }
  }
  int perturbation_index = 0;
  for (size_t i = 0; i < p.paraphrases.size(); ++i) {
    if (!p.paraphrases[i].empty() && user.find(p.paraphrases[i]) != std::string::npos) {
      perturbation_index = static_cast<int>(i) + 1;
      break;
    }
  }
  if (perturbation_index == 0) {
    // Persona mode (original text N times) cannot be told apart by text;
    // a bare-problem CoT re-solve is served from q_only instead.
    if (p.q_only && user.find("Answer format:") == std::string::npos) {
      return respond(*p.q_only, req);
    }
    perturbation_index = 1;
  }
  auto it = p.samples.find(perturbation_index);
  if (it == p.samples.end() || it->second.empty()) {
    throw Error(ErrorCode::kMissingFixture,
                p.id + ": no samples for perturbation " + std::to_string(perturbation_index));
  }
  const auto& samples = it->second;
  if (sample_index >= static_cast<int>(samples.size())) {
    throw Error(ErrorCode::kMissingFixture,
                p.id + ": no sample " + std::to_string(sample_index) + " for perturbation " +
                    std::to_string(perturbation_index));
  }
  return respond(samples[sample_index], req);
}

}  // namespace scmoa
