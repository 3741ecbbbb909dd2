#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptsense/task.hpp"

namespace promptsense {

/// Either one of the task's labels or the raw text that failed to parse.
class ParseOutcome {
 public:
  static ParseOutcome parsed(std::string label) { return ParseOutcome(std::move(label), true); }
  static ParseOutcome unparsed(std::string raw) { return ParseOutcome(std::move(raw), false); }

  bool is_parsed() const noexcept { return parsed_; }
  /// The canonical label. Only meaningful when is_parsed().
  const std::string& label() const noexcept { return text_; }
  /// The original response. Only meaningful when !is_parsed().
  const std::string& raw() const noexcept { return text_; }

  friend bool operator==(const ParseOutcome&, const ParseOutcome&) = default;

 private:
  ParseOutcome(std::string text, bool parsed) : text_(std::move(text)), parsed_(parsed) {}
  std::string text_;
  bool parsed_;
};

struct ParserConfig {
  /// Lowercase prefixes stripped (each at most once, in order) from the start of the response.
  std::vector<std::string> prefixes = default_prefixes();
  /// Parse only the final non-empty line.
  bool last_line_mode = false;

  static std::vector<std::string> default_prefixes();
  void validate() const;
};

std::string normalize_response(std::string_view raw, const ParserConfig& config);

/// Exact match of the normalized response against the normalized task labels.
ParseOutcome parse_label(std::string_view raw, const TaskSpec& task, const ParserConfig& config);

}  // namespace promptsense
