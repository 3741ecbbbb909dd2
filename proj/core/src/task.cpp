#include "promptsense/task.hpp"

#include "promptsense/error.hpp"
#include "promptsense/unicode.hpp"

namespace promptsense {

std::string canonical_form(std::string_view text) {
  return unicode::collapse_whitespace(unicode::strip_punctuation(unicode::ascii_lower(text)));
}

TaskSpec::TaskSpec(std::string key, std::string problem_name, std::string label_name,
                   std::array<std::string, 2> labels, std::optional<std::string> labels_description)
    : key_(std::move(key)),
      problem_name_(std::move(problem_name)),
      label_name_(std::move(label_name)),
      labels_(std::move(labels)) {
  if (key_.empty()) throw InvalidInputError("task key is empty");
  for (std::size_t i = 0; i < 2; ++i) {
    const std::string& label = labels_[i];
    if (label.empty()) throw InvalidInputError("task '" + key_ + "' has an empty label");
    if (unicode::ascii_lower(label) != label) {
      throw InvalidInputError("task '" + key_ + "' label '" + label + "' is not lowercase");
    }
    normalized_labels_[i] = canonical_form(label);
    if (normalized_labels_[i].empty()) {
      throw InvalidInputError("task '" + key_ + "' label '" + label + "' is empty after normalization");
    }
  }
  if (normalized_labels_[0] == normalized_labels_[1]) {
    throw InvalidInputError("task '" + key_ + "' labels are not distinct after normalization");
  }
  labels_description_ = labels_description ? *labels_description : "'" + labels_[0] + "' or '" + labels_[1] + "'";
}

std::string TaskSpec::labels_comma_separated() const { return labels_[0] + ", " + labels_[1]; }

std::string TaskSpec::joined_labels() const { return labels_[0] + " or " + labels_[1]; }

std::optional<std::string> TaskSpec::placeholder(std::string_view name) const {
  if (name == "problem name") return problem_name_;
  if (name == "label name") return label_name_;
  if (name == "labels description") return labels_description_;
  if (name == "labels comma-separated") return labels_comma_separated();
  if (name == "joined labels") return joined_labels();
  return std::nullopt;
}

std::optional<std::size_t> TaskSpec::match_label(std::string_view normalized_text) const {
  for (std::size_t i = 0; i < 2; ++i) {
    if (normalized_labels_[i] == normalized_text) return i;
  }
  return std::nullopt;
}

const std::vector<TaskSpec>& builtin_tasks() {
  static const std::vector<TaskSpec> tasks = {
      TaskSpec("sentiment", "Sentiment Analysis", "sentiment", {"positive", "negative"}),
      TaskSpec("toxicity", "Toxicity Detection", "toxicity", {"toxic", "non-toxic"}),
      TaskSpec("sarcasm", "Sarcasm Detection", "sarcasm", {"sarcastic", "not sarcastic"}),
  };
  return tasks;
}

std::optional<TaskSpec> find_builtin_task(std::string_view key) {
  for (const auto& t : builtin_tasks()) {
    if (t.key() == key) return t;
  }
  return std::nullopt;
}

}  // namespace promptsense
