#pragma once

// Task runner behind the marcusfpe command line.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace marcus::run {

enum ExitCode : int { kOk = 0, kNumericFailure = 1, kConfigError = 2 };

// Runs one task and writes its artifacts plus manifest.txt into `output`.
// The manifest is written on every path, including failures.
int run_task(std::string_view task, const std::string& config_text,
             const std::filesystem::path& output, std::optional<std::uint64_t> seed_override);

// marcusfpe <flow-check|simulate|solve|compare> --config PATH [--output DIR] [--seed N]
int run_cli(int argc, char** argv);

}  // namespace marcus::run
