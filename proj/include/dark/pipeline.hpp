#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace dark {

/// ingest, sample-queries, train, train-rl, abduce, deduce, eval, report.
const std::vector<std::string>& pipeline_commands();

/// Every key a command reads, with its default. A null "seed" means the
/// command refuses to run until one is given.
nlohmann::json default_config(std::string_view command);

/// Defaults overlaid with `overrides`; unknown keys are rejected.
nlohmann::json effective_config(std::string_view command, const nlohmann::json& overrides);

struct PipelineResult {
  nlohmann::json manifest;  // what run.json holds
  std::filesystem::path manifest_path;
};

/// Runs one command with an already-merged config and writes run.json into
/// config["out"]. Progress lines go to stderr when config["verbose"] is true.
PipelineResult run_pipeline(std::string_view command, const nlohmann::json& config);

std::string version_string();

}  // namespace dark
