#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promptsense/task.hpp"

namespace promptsense {

struct LabeledExample {
  std::string id;
  std::string text;
  /// One of the task's canonical labels.
  std::string gold;
};

/// Parses JSONL lines {"id": str, "text": str, "label": str}. Labels are matched against the
/// task after normalization and replaced by the canonical label. Blank lines are skipped.
std::vector<LabeledExample> parse_dataset(std::string_view jsonl, const TaskSpec& task);
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, const TaskSpec& task);

}  // namespace promptsense
