#pragma once

// JSON form of a single pipeline run, consumed by the alert service.

#include <filesystem>
#include <string>
#include <string_view>

#include "ffprid/pipeline.hpp"

namespace ffprid {

std::string run_to_json(const PipelineRun& run);
PipelineRun run_from_json(std::string_view text);

void save_run(const PipelineRun& run, const std::filesystem::path& path);
PipelineRun load_run(const std::filesystem::path& path);

}  // namespace ffprid
