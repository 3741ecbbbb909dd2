#include "promptsense/templates.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptsense/digest.hpp"
#include "promptsense/error.hpp"
#include "promptsense/unicode.hpp"

namespace promptsense {

namespace detail {
extern const std::string_view kDefaultTemplateLibrary;
}

using nlohmann::json;

std::string_view to_string(TemplateKind kind) {
  switch (kind) {
    case TemplateKind::prompt: return "prompt";
    case TemplateKind::fragment: return "fragment";
    case TemplateKind::followup: return "followup";
  }
  return "prompt";
}

TemplateKind template_kind_from_string(std::string_view text) {
  if (text == "prompt") return TemplateKind::prompt;
  if (text == "fragment") return TemplateKind::fragment;
  if (text == "followup") return TemplateKind::followup;
  throw FormatError("unknown template kind '" + std::string(text) + "'");
}

namespace {

struct PlaceholderSpan {
  std::size_t begin;  // position of '{'
  std::size_t end;    // one past '}'
  std::string_view name;
};

// A placeholder is "{name}" with no braces inside; stray braces are literal text.
std::vector<PlaceholderSpan> scan_placeholders(std::string_view body) {
  std::vector<PlaceholderSpan> out;
  std::size_t pos = 0;
  while ((pos = body.find('{', pos)) != std::string_view::npos) {
    const auto close = body.find_first_of("{}", pos + 1);
    if (close == std::string_view::npos) break;
    if (body[close] == '{') {
      pos = close;
      continue;
    }
    if (close > pos + 1) out.push_back({pos, close + 1, body.substr(pos + 1, close - pos - 1)});
    pos = close + 1;
  }
  return out;
}

bool is_task_placeholder(std::string_view name) {
  const auto& names = task_placeholder_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  for (const auto& span : scan_placeholders(body)) {
    std::string name(span.name);
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
  }
  return out;
}

const std::vector<std::string>& task_placeholder_names() {
  static const std::vector<std::string> names = {"problem name", "label name", "labels description",
                                                 "labels comma-separated", "joined labels"};
  return names;
}

const std::vector<std::string>& TemplateLibrary::required_names() {
  static const std::vector<std::string> names = {
      "Base",         "Expert",       "Expert Detailed", "Ignorant",      "Gambler",          "Greedy Gambler",
      "Python Expert", "CoT",         "CoT-DB",          "CoT-fired",     "CoT-DB-fired",     "Expert CoT",
      "Expert CoT-DB", "CoT Instructions", "CoT-verify", "CoT-DB-verify"};
  return names;
}

TemplateLibrary TemplateLibrary::from_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("template library is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("templates") || !doc["templates"].is_object()) {
    throw FormatError("template library must be an object with a 'templates' object");
  }
  TemplateLibrary library;
  if (doc.contains("comment") && doc["comment"].is_string()) library.comment_ = doc["comment"].get<std::string>();
  for (const auto& [name, entry] : doc["templates"].items()) {
    if (!entry.is_object() || !entry.contains("body") || !entry["body"].is_string()) {
      throw FormatError("template '" + name + "' needs a string 'body'");
    }
    PromptTemplate tmpl;
    tmpl.name = name;
    tmpl.body = entry["body"].get<std::string>();
    tmpl.kind = template_kind_from_string(entry.value("kind", std::string("prompt")));
    if (entry.contains("base")) tmpl.base = entry["base"].get<std::string>();
    library.add(std::move(tmpl));
  }
  return library;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open template library '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

const TemplateLibrary& TemplateLibrary::builtin() {
  static const TemplateLibrary library = from_json(detail::kDefaultTemplateLibrary);
  return library;
}

void TemplateLibrary::add(PromptTemplate tmpl) {
  if (tmpl.name.empty()) throw InvalidInputError("template name is empty");
  std::string key = tmpl.name;
  templates_.insert_or_assign(std::move(key), std::move(tmpl));
}

bool TemplateLibrary::erase(std::string_view name) {
  auto it = templates_.find(name);
  if (it == templates_.end()) return false;
  templates_.erase(it);
  return true;
}

const PromptTemplate* TemplateLibrary::find(std::string_view name) const {
  auto it = templates_.find(name);
  return it == templates_.end() ? nullptr : &it->second;
}

std::vector<std::string> TemplateLibrary::names() const {
  std::vector<std::string> out;
  out.reserve(templates_.size());
  for (const auto& [name, _] : templates_) out.push_back(name);
  return out;
}

const PromptTemplate* TemplateLibrary::resolve_include(std::string_view placeholder) const {
  if (const auto* exact = find(placeholder)) return exact;
  constexpr std::string_view kSuffix = " prompt";
  if (!placeholder.ends_with(kSuffix)) return nullptr;
  const std::string stem = unicode::ascii_lower(placeholder.substr(0, placeholder.size() - kSuffix.size()));
  for (const auto& [name, tmpl] : templates_) {
    if (unicode::ascii_lower(name) == stem) return &tmpl;
  }
  return nullptr;
}

std::string TemplateLibrary::to_json() const {
  json templates = json::object();
  for (const auto& [name, tmpl] : templates_) {
    json entry = {{"kind", std::string(promptsense::to_string(tmpl.kind))}, {"body", tmpl.body}};
    if (tmpl.base) entry["base"] = *tmpl.base;
    templates[name] = std::move(entry);
  }
  json doc = {{"format", "promptsense-templates/1"}, {"templates", std::move(templates)}};
  if (!comment_.empty()) doc["comment"] = comment_;
  return doc.dump(2) + "\n";
}

std::string TemplateLibrary::digest() const {
  json templates = json::object();
  for (const auto& [name, tmpl] : templates_) {
    templates[name] = {{"kind", std::string(promptsense::to_string(tmpl.kind))},
                       {"body", tmpl.body},
                       {"base", tmpl.base ? json(*tmpl.base) : json(nullptr)}};
  }
  return sha256_hex(templates.dump());
}

namespace {

void expand(const PromptTemplate& tmpl, const TaskSpec& task, const TemplateLibrary& library,
            std::vector<std::string>& stack, std::string& out) {
  if (std::find(stack.begin(), stack.end(), tmpl.name) != stack.end()) {
    std::string chain;
    for (const auto& s : stack) chain += s + " -> ";
    throw CycleError("template include cycle: " + chain + tmpl.name);
  }
  stack.push_back(tmpl.name);
  std::string_view body = tmpl.body;
  std::size_t cursor = 0;
  for (const auto& span : scan_placeholders(body)) {
    out.append(body.substr(cursor, span.begin - cursor));
    cursor = span.end;
    if (auto value = task.placeholder(span.name)) {
      out.append(*value);
    } else if (const auto* included = library.resolve_include(span.name)) {
      expand(*included, task, library, stack, out);
    } else {
      throw ResolutionError(std::string(span.name), "unresolved placeholder {" + std::string(span.name) +
                                                        "} in template '" + tmpl.name + "'");
    }
  }
  out.append(body.substr(cursor));
  stack.pop_back();
}

}  // namespace

std::string render_template(std::string_view name, const TaskSpec& task, const TemplateLibrary& library) {
  const auto* tmpl = library.find(name);
  if (!tmpl) throw UnknownTemplateError("unknown template '" + std::string(name) + "'");
  if (tmpl->kind == TemplateKind::fragment) {
    throw NotRunnableError("template '" + tmpl->name + "' is a fragment and is not runnable on its own");
  }
  std::vector<std::string> stack;
  std::string out;
  expand(*tmpl, task, library, stack, out);
  return out;
}

std::vector<std::string> ValidationReport::broken_templates() const {
  std::set<std::string> names;
  for (const auto& issue : issues) {
    if (issue.kind != ValidationIssue::Kind::missing_required) names.insert(issue.template_name);
  }
  return {names.begin(), names.end()};
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  for (const auto& issue : issues) {
    switch (issue.kind) {
      case ValidationIssue::Kind::missing_required: os << "missing required template"; break;
      case ValidationIssue::Kind::unresolved_placeholder: os << "unresolved placeholder"; break;
      case ValidationIssue::Kind::broken_dependency: os << "broken dependency"; break;
      case ValidationIssue::Kind::cycle: os << "include cycle"; break;
      case ValidationIssue::Kind::bad_followup: os << "invalid follow-up"; break;
    }
    os << ": '" << issue.template_name << "'";
    if (!issue.detail.empty()) os << " (" << issue.detail << ")";
    os << "\n";
  }
  return os.str();
}

ValidationReport validate_library(const TemplateLibrary& library) {
  using Kind = ValidationIssue::Kind;
  ValidationReport report;

  for (const auto& name : TemplateLibrary::required_names()) {
    if (!library.find(name)) report.issues.push_back({Kind::missing_required, name, ""});
  }

  // Include graph, with unresolvable placeholders reported directly.
  std::map<std::string, std::vector<std::string>> edges;
  std::set<std::string> broken;
  for (const auto& name : library.names()) {
    const auto& tmpl = *library.find(name);
    auto& out = edges[name];
    for (const auto& ph : tmpl.placeholders()) {
      if (is_task_placeholder(ph)) continue;
      if (const auto* inc = library.resolve_include(ph)) {
        out.push_back(inc->name);
      } else {
        report.issues.push_back({Kind::unresolved_placeholder, name, "{" + ph + "}"});
        broken.insert(name);
      }
    }
    if (tmpl.kind == TemplateKind::followup) {
      const PromptTemplate* base = tmpl.base ? library.find(*tmpl.base) : nullptr;
      if (!tmpl.base) {
        report.issues.push_back({Kind::bad_followup, name, "no base template"});
      } else if (!base) {
        report.issues.push_back({Kind::bad_followup, name, "base template '" + *tmpl.base + "' does not exist"});
      } else if (base->kind != TemplateKind::prompt) {
        report.issues.push_back({Kind::bad_followup, name, "base template '" + *tmpl.base + "' is not runnable"});
      }
    }
  }

  // Cycles: iterative colouring DFS; each distinct cycle reported once per member.
  std::map<std::string, int> colour;  // 0 white, 1 on stack, 2 done
  std::set<std::set<std::string>> seen_cycles;
  std::vector<std::string> path;
  auto dfs = [&](auto&& self, const std::string& node) -> void {
    colour[node] = 1;
    path.push_back(node);
    for (const auto& next : edges[node]) {
      if (colour[next] == 1) {
        auto start = std::find(path.begin(), path.end(), next);
        std::set<std::string> members(start, path.end());
        if (seen_cycles.insert(members).second) {
          std::string chain;
          for (auto it = start; it != path.end(); ++it) chain += *it + " -> ";
          chain += next;
          for (const auto& m : members) {
            report.issues.push_back({Kind::cycle, m, chain});
            broken.insert(m);
          }
        }
      } else if (colour[next] == 0) {
        self(self, next);
      }
    }
    path.pop_back();
    colour[node] = 2;
  };
  for (const auto& [name, _] : edges) {
    if (colour[name] == 0) dfs(dfs, name);
  }

  // Anything that includes a broken template is itself broken.
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& [name, deps] : edges) {
      if (broken.count(name)) continue;
      for (const auto& dep : deps) {
        if (broken.count(dep)) {
          report.issues.push_back({Kind::broken_dependency, name, "includes broken template '" + dep + "'"});
          broken.insert(name);
          changed = true;
          break;
        }
      }
    }
  }
  // A follow-up cannot run when its base prompt cannot render.
  for (const auto& name : library.names()) {
    const auto& tmpl = *library.find(name);
    if (tmpl.kind == TemplateKind::followup && tmpl.base && broken.count(*tmpl.base) && !broken.count(name)) {
      report.issues.push_back({Kind::broken_dependency, name, "base template '" + *tmpl.base + "' is broken"});
      broken.insert(name);
    }
  }
  return report;
}

}  // namespace promptsense
