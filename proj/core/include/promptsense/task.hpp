#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptsense {

/// A binary classification task and the strings used to fill template placeholders.
class TaskSpec {
 public:
  /// Validates the labels: two of them, non-empty, lowercase, and distinct after
  /// punctuation/whitespace normalization. labels_description defaults to "'a' or 'b'".
  TaskSpec(std::string key, std::string problem_name, std::string label_name, std::array<std::string, 2> labels,
           std::optional<std::string> labels_description = std::nullopt);

  /// Short identifier used in file names and configs ("sentiment").
  const std::string& key() const noexcept { return key_; }
  const std::string& problem_name() const noexcept { return problem_name_; }
  const std::string& label_name() const noexcept { return label_name_; }
  const std::array<std::string, 2>& labels() const noexcept { return labels_; }
  const std::string& labels_description() const noexcept { return labels_description_; }

  /// "a, b"
  std::string labels_comma_separated() const;
  /// "a or b"
  std::string joined_labels() const;

  /// Value of a task placeholder ("problem name", "label name", "labels description",
  /// "labels comma-separated", "joined labels"), or nullopt if the name is not a task field.
  std::optional<std::string> placeholder(std::string_view name) const;

  /// Index of the label whose normalized form equals normalized(text), if any.
  std::optional<std::size_t> match_label(std::string_view normalized_text) const;

 private:
  std::string key_;
  std::string problem_name_;
  std::string label_name_;
  std::array<std::string, 2> labels_;
  std::string labels_description_;
  std::array<std::string, 2> normalized_labels_;
};

/// Normalization applied symmetrically to labels and responses: ASCII lowercase, remove
/// Unicode punctuation, collapse whitespace.
std::string canonical_form(std::string_view text);

/// The three built-in tasks: "sentiment", "toxicity", "sarcasm".
const std::vector<TaskSpec>& builtin_tasks();
std::optional<TaskSpec> find_builtin_task(std::string_view key);

}  // namespace promptsense
