#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "bdrlab/config.hpp"
#include "bdrlab/trainer.hpp"

namespace bdrlab {

inline constexpr int kReportSchemaVersion = 1;

// Deterministic JSON text of everything in a run except timing. Throws
// NumericError if any number is not finite.
std::string report_body(const RunReport& report, const ExperimentConfig& config);

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

// {"schema_version", "body_sha256", "body"}: identical for identical runs.
std::string report_document(const RunReport& report, const ExperimentConfig& config);

// CSV tables. Numbers use the shortest round-trip form.
std::string step_trace_csv(const RunReport& report);
std::string schedule_csv(const RunReport& report);
std::string boxplot_csv(const RunReport& report);

// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

// Writes <dir>/<variant>_<seed>.json, the three CSV tables and a timing
// sidecar; returns the JSON path.
std::filesystem::path write_run_outputs(const std::filesystem::path& dir, const RunReport& report,
                                        const ExperimentConfig& config);

}  // namespace bdrlab
