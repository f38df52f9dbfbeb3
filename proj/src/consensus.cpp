#include "scmoa/consensus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace scmoa {

namespace {

std::string trim_for_compare(const std::string& s) {
  std::ostringstream out;
  std::vector<std::string> lines;
  size_t pos = 0;
  while (pos <= s.size()) {
    size_t eol = s.find('\n', pos);
    size_t len = (eol == std::string::npos ? s.size() : eol) - pos;
    std::string line = s.substr(pos, len);
    size_t end = line.find_last_not_of(" \t\r");
    lines.push_back(end == std::string::npos ? "" : line.substr(0, end + 1));
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out << '\n';
    out << lines[i];
  }
  return out.str();
}

}  // namespace

double pass_fraction(const std::vector<TestResult>& results) {
  if (results.empty()) return 0.0;
  int passed = 0;
  for (const auto& r : results) passed += r.passed ? 1 : 0;
  return static_cast<double>(passed) / static_cast<double>(results.size());
}

std::vector<std::string> passed_test_names(const std::vector<TestResult>& results) {
  std::vector<std::string> names;
  for (const auto& r : results)
    if (r.passed) names.push_back(r.name);
  return names;
}

double code_quality_score(const std::string& solution_source,
                          const std::vector<TestCase>& public_tests,
                          const ExecConfig& config) {
  if (public_tests.empty())
    throw Error(ErrorCode::kEmptyInput, "code scoring requires at least one public test");
  return pass_fraction(run_tests(solution_source, public_tests, config));
}

bool outputs_match(const std::string& actual, const std::string& expected) {
  return trim_for_compare(actual) == trim_for_compare(expected);
}

std::vector<double> qa_quality_scores(const std::vector<Proposal>& proposals) {
  if (proposals.empty())
    throw Error(ErrorCode::kEmptyInput, "qa scoring requires at least one proposal");
  const size_t n = proposals.size();
  std::vector<std::string> keys(n);
  for (size_t i = 0; i < n; ++i) {
    if (!proposals[i].answer)
      throw Error(ErrorCode::kEmptyInput, "qa scoring requires extracted answers");
    keys[i] = canonical_key(*proposals[i].answer);
  }
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) {
    int matches = 0;
    for (size_t j = 0; j < n; ++j) matches += keys[j] == keys[i] ? 1 : 0;
    scores[i] = static_cast<double>(matches) / static_cast<double>(n);
  }
  return scores;
}

std::vector<Cluster> cluster_proposals(const std::vector<Proposal>& proposals,
                                       ProblemKind kind) {
  std::vector<Cluster> clusters;
  std::map<std::string, size_t> by_key;
  for (const auto& p : proposals) {
    if (!p.scoreable()) continue;
    std::string key;
    if (kind == ProblemKind::kQa) {
      key = canonical_key(*p.answer);
    } else {
      // Exact set of passed public test names, not the pass count.
      std::string joined;
      for (const auto& name : p.passed_public) {
        joined += name;
        joined += '\x1f';
      }
      key = joined;
    }
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      Cluster c;
      c.label = static_cast<int>(clusters.size());
      c.representative_key = key;
      c.representative_answer = p.answer;
      c.representative_signature = p.passed_public;
      clusters.push_back(std::move(c));
      it = by_key.emplace(key, clusters.size() - 1).first;
    }
    Cluster& c = clusters[it->second];
    c.members.push_back(p.perturbation_index);
    c.mean_quality += p.quality;
  }
  if (clusters.empty())
    throw Error(ErrorCode::kNoScoreableProposals, "no scoreable proposals to cluster");
  for (auto& c : clusters) {
    std::sort(c.members.begin(), c.members.end());
    c.size = static_cast<int>(c.members.size());
    c.mean_quality /= c.size;
  }
  return clusters;
}

MajoritySelection select_majority(const std::vector<Cluster>& clusters, int n_total) {
  if (clusters.empty())
    throw Error(ErrorCode::kEmptyInput, "majority selection over empty cluster set");
  size_t best = 0;
  for (size_t i = 1; i < clusters.size(); ++i) {
    const Cluster& a = clusters[i];
    const Cluster& b = clusters[best];
    if (a.size != b.size) {
      if (a.size > b.size) best = i;
      continue;
    }
    if (a.mean_quality != b.mean_quality) {
      if (a.mean_quality > b.mean_quality) best = i;
      continue;
    }
    // Final tie-break: earliest first occurrence (lowest minimum member).
    if (a.members.front() < b.members.front()) best = i;
  }
  MajoritySelection sel;
  sel.cluster_index = static_cast<int>(best);
  sel.consensus = static_cast<double>(clusters[best].size) / static_cast<double>(n_total);
  return sel;
}

FidelityGapReport fidelity_gap_report(const std::vector<CodeOutcome>& outcomes) {
  FidelityGapReport report;
  report.records_considered = static_cast<int>(outcomes.size());
  for (const auto& o : outcomes) {
    if (!o.public_all_passed) continue;
    ++report.public_pass_count;
    if (o.private_all_passed) ++report.private_also_pass_count;
  }
  if (report.public_pass_count > 0) {
    double p = static_cast<double>(report.private_also_pass_count) /
               static_cast<double>(report.public_pass_count);
    report.p_private_given_public = p;
    report.false_positive_rate = 1.0 - p;
  }
  return report;
}

}  // namespace scmoa
