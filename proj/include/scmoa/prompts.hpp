#pragma once

#include <map>
#include <string>
#include <vector>

#include "scmoa/core.hpp"

namespace scmoa {

struct Persona {
  std::string name;
  std::string system;
};

struct ControlledOperation {
  std::string name;         // lexical | syntactic | discourse | register | compression
  std::string instruction;
};

// Versioned prompt catalog shipped with the repo. The compiled-in default
// is generated from data/prompt_catalog.json at build time; a file path
// can override it at runtime.
class PromptCatalog {
 public:
  static PromptCatalog load_default();
  static PromptCatalog load_file(const std::string& path);
  static PromptCatalog parse(const std::string& json_text);

  int version() const { return version_; }

  const std::string& proposer_system(ProblemKind kind) const;
  const std::string& refine_system(ProblemKind kind) const;
  const std::string& aggregate_system(ProblemKind kind) const;
  const std::vector<Persona>& personas(ProblemKind kind) const;

  const std::string& spuq_system() const { return spuq_system_; }
  const std::string& controlled_system() const { return controlled_system_; }
  const std::vector<ControlledOperation>& controlled_operations() const {
    return controlled_ops_;
  }

  const std::string& templ(const std::string& name) const;

  // Replaces every `{key}` occurrence; keys absent from the map are left
  // untouched so templates can be filled in stages.
  static std::string substitute(const std::string& templ,
                                const std::map<std::string, std::string>& values);

 private:
  int version_ = 0;
  std::string qa_proposer_system_, qa_refine_system_, qa_aggregate_system_;
  std::string code_proposer_system_, code_refine_system_, code_aggregate_system_;
  std::vector<Persona> qa_personas_, code_personas_;
  std::string spuq_system_, controlled_system_;
  std::vector<ControlledOperation> controlled_ops_;
  std::map<std::string, std::string> templates_;
};

}  // namespace scmoa
