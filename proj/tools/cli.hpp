#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace promptsense::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kTemplateError = 2,
  kIncompleteData = 3,
  kConfigError = 4,
};

/// Flags shared by run, analyze and report. Set fields override the config document.
struct CommonOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  bool allow_partial = false;
  std::optional<std::uint64_t> seed;
};

struct RenderOptions {
  std::string template_name;
  std::string task = "sentiment";
  std::optional<std::filesystem::path> config;
  std::optional<std::filesystem::path> library;
};

int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err);
int cmd_validate(const std::optional<std::filesystem::path>& config, const std::optional<std::filesystem::path>& library,
                 std::ostream& out, std::ostream& err);
int cmd_run(const CommonOptions& options, std::ostream& out, std::ostream& err);
int cmd_analyze(const CommonOptions& options, bool svg, std::ostream& out, std::ostream& err);
int cmd_report(const CommonOptions& options, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a command.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace promptsense::cli
