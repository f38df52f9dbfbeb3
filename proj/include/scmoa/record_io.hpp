#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scmoa/pipeline.hpp"

namespace scmoa {

// Benchmark JSONL: one Problem per line; tests nested under
// tests.public[] / tests.private[]. Rejects duplicate ids and code
// problems without public tests.
std::vector<Problem> load_benchmark(const std::string& path);

nlohmann::json problem_to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);

// Records are written with sorted keys so identical runs yield
// byte-identical files.
void write_records(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_records(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace scmoa
