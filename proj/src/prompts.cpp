#include "scmoa/prompts.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scmoa/errors.hpp"
#include "scmoa_embedded/prompt_catalog_embed.hpp"

namespace scmoa {

using nlohmann::json;

PromptCatalog PromptCatalog::load_default() {
  return parse(std::string(embedded::kDefaultPromptCatalogJson));
}

PromptCatalog PromptCatalog::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open prompt catalog: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

PromptCatalog PromptCatalog::parse(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("prompt catalog: ") + e.what());
  }
  PromptCatalog c;
  c.version_ = j.at("version").get<int>();

  auto load_personas = [](const json& arr) {
    std::vector<Persona> out;
    for (const auto& p : arr)
      out.push_back({p.at("name").get<std::string>(), p.at("system").get<std::string>()});
    return out;
  };

  const json& qa = j.at("qa");
  c.qa_proposer_system_ = qa.at("proposer_system").get<std::string>();
  c.qa_refine_system_ = qa.at("refine_system").get<std::string>();
  c.qa_aggregate_system_ = qa.at("aggregate_system").get<std::string>();
  c.qa_personas_ = load_personas(qa.at("personas"));

  const json& code = j.at("code");
  c.code_proposer_system_ = code.at("proposer_system").get<std::string>();
  c.code_refine_system_ = code.at("refine_system").get<std::string>();
  c.code_aggregate_system_ = code.at("aggregate_system").get<std::string>();
  c.code_personas_ = load_personas(code.at("personas"));

  const json& para = j.at("paraphrase");
  c.spuq_system_ = para.at("spuq_system").get<std::string>();
  c.controlled_system_ = para.at("controlled_system").get<std::string>();
  for (const auto& op : para.at("controlled_operations")) {
    c.controlled_ops_.push_back(
        {op.at("name").get<std::string>(), op.at("instruction").get<std::string>()});
  }

  for (const auto& [name, value] : j.at("templates").items()) {
    c.templates_[name] = value.get<std::string>();
  }
  return c;
}

const std::string& PromptCatalog::proposer_system(ProblemKind kind) const {
  return kind == ProblemKind::kQa ? qa_proposer_system_ : code_proposer_system_;
}

const std::string& PromptCatalog::refine_system(ProblemKind kind) const {
  return kind == ProblemKind::kQa ? qa_refine_system_ : code_refine_system_;
}

const std::string& PromptCatalog::aggregate_system(ProblemKind kind) const {
  return kind == ProblemKind::kQa ? qa_aggregate_system_ : code_aggregate_system_;
}

const std::vector<Persona>& PromptCatalog::personas(ProblemKind kind) const {
  return kind == ProblemKind::kQa ? qa_personas_ : code_personas_;
}

const std::string& PromptCatalog::templ(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end())
    throw Error(ErrorCode::kConfigError, "prompt catalog missing template: " + name);
  return it->second;
}

std::string PromptCatalog::substitute(const std::string& templ,
                                      const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(templ.size());
  size_t pos = 0;
  while (pos < templ.size()) {
    size_t open = templ.find('{', pos);
    if (open == std::string::npos) {
      out.append(templ, pos, std::string::npos);
      break;
    }
    size_t close = templ.find('}', open);
    if (close == std::string::npos) {
      out.append(templ, pos, std::string::npos);
      break;
    }
    out.append(templ, pos, open - pos);
    std::string key = templ.substr(open + 1, close - open - 1);
    auto it = values.find(key);
    if (it != values.end()) {
      out.append(it->second);
    } else {
      out.append(templ, open, close - open + 1);  // unknown key stays literal
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace scmoa
