#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scmoa/agents.hpp"

namespace scmoa {

// A fully scripted model: every response is looked up in a fixture
// manifest, so pipeline runs are deterministic and offline. Running it
// once through a CachingClient materializes a cache directory that then
// serves as the scripted backend's fixture set.
//
// Requests are classified by their system prompt (paraphrase / refine /
// aggregate / proposer) and routed to the manifest entry of the problem
// whose text or paraphrase appears in the user prompt.
struct ManifestProblem {
  std::string id;
  std::string text;                                    // must match the benchmark text
  std::vector<std::string> paraphrases;                // spuq response, in order
  std::map<int, std::vector<std::string>> samples;     // perturbation index -> k responses
  std::map<int, std::string> refine;                   // perturbation index -> response
  std::string aggregate;
  std::optional<std::string> q_only;                   // bare-problem conditions
};

struct FixtureManifest {
  std::vector<ManifestProblem> problems;
  double expected_vote_accuracy = 0.0;
  double expected_scmoa_accuracy = 0.0;

  static FixtureManifest load_file(const std::string& path);
  static FixtureManifest parse(const std::string& json_text);
};

class ManifestBackend : public Backend {
 public:
  explicit ManifestBackend(FixtureManifest manifest);

  ChatResponse complete(const ChatRequest& req) override;

 private:
  const ManifestProblem& problem_for_user_prompt(const std::string& user) const;
  ChatResponse respond(const std::string& text, const ChatRequest& req) const;

  FixtureManifest manifest_;
};

}  // namespace scmoa
