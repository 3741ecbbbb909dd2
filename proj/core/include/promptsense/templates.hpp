#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptsense/task.hpp"

namespace promptsense {

enum class TemplateKind {
  prompt,    ///< a runnable system prompt
  fragment,  ///< only usable inside other templates
  followup,  ///< final user turn of a verification conversation
};

std::string_view to_string(TemplateKind kind);
TemplateKind template_kind_from_string(std::string_view text);

struct PromptTemplate {
  std::string name;
  std::string body;
  TemplateKind kind = TemplateKind::prompt;
  /// For follow-ups: the prompt whose conversation is being followed up.
  std::optional<std::string> base;

  /// Placeholder names referenced by the body, in order of first appearance.
  std::vector<std::string> placeholders() const;
};

/// The placeholder names supplied by a TaskSpec.
const std::vector<std::string>& task_placeholder_names();

/// Named templates. Immutable once built; safe to share between threads.
class TemplateLibrary {
 public:
  TemplateLibrary() = default;

  static TemplateLibrary from_json(std::string_view json_text);
  static TemplateLibrary load(const std::filesystem::path& path);
  /// The shipped default library.
  static const TemplateLibrary& builtin();

  /// Names every library must define.
  static const std::vector<std::string>& required_names();

  void add(PromptTemplate tmpl);
  bool erase(std::string_view name);
  const PromptTemplate* find(std::string_view name) const;
  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return templates_.size(); }

  /// Template referenced by a placeholder: an exact name, or "<name> prompt" matched
  /// case-insensitively ("base prompt" -> "Base").
  const PromptTemplate* resolve_include(std::string_view placeholder) const;

  std::string to_json() const;
  /// SHA-256 over the canonical JSON serialization.
  std::string digest() const;

  const std::string& comment() const noexcept { return comment_; }

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
  std::string comment_;
};

/// Fully resolves a template for a task. Throws NotFoundError for an unknown name,
/// NotRunnableError for fragments, ResolutionError for unresolvable placeholders and
/// CycleError for include cycles. Follow-ups render to their instruction text.
std::string render_template(std::string_view name, const TaskSpec& task, const TemplateLibrary& library);

struct ValidationIssue {
  enum class Kind { missing_required, unresolved_placeholder, broken_dependency, cycle, bad_followup };
  Kind kind;
  std::string template_name;
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const noexcept { return issues.empty(); }
  /// Present templates that cannot be rendered, sorted by name.
  std::vector<std::string> broken_templates() const;
  std::string to_string() const;
};

ValidationReport validate_library(const TemplateLibrary& library);

}  // namespace promptsense
