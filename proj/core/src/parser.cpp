#include "promptsense/parser.hpp"

#include "promptsense/error.hpp"
#include "promptsense/unicode.hpp"

namespace promptsense {
namespace {

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

std::string_view last_nonempty_line(std::string_view text) {
  std::string_view rest = text;
  while (!rest.empty()) {
    const auto nl = rest.find_last_of('\n');
    std::string_view line = nl == std::string_view::npos ? rest : rest.substr(nl + 1);
    if (!is_blank(line)) return line;
    if (nl == std::string_view::npos) break;
    rest = rest.substr(0, nl);
  }
  return {};
}

std::string_view trim_left(std::string_view s) {
  const auto pos = s.find_first_not_of(" \t\r\n\f\v");
  return pos == std::string_view::npos ? std::string_view{} : s.substr(pos);
}

}  // namespace

std::vector<std::string> ParserConfig::default_prefixes() {
  return {"label:", "prediction:", "answer:", "output:", "sentiment:", "toxicity:", "sarcasm:"};
}

void ParserConfig::validate() const {
  if (prefixes.empty()) throw InvalidInputError("parser prefix list is empty");
  for (const auto& p : prefixes) {
    if (p.empty() || unicode::ascii_lower(p) != p) {
      throw InvalidInputError("parser prefix '" + p + "' must be non-empty and lowercase");
    }
  }
}

std::string normalize_response(std::string_view raw, const ParserConfig& config) {
  std::string text = unicode::ascii_lower(config.last_line_mode ? last_nonempty_line(raw) : raw);
  std::string_view view = trim_left(text);
  for (const auto& prefix : config.prefixes) {
    if (view.starts_with(prefix)) view = trim_left(view.substr(prefix.size()));
  }
  return unicode::collapse_whitespace(unicode::strip_punctuation(view));
}

ParseOutcome parse_label(std::string_view raw, const TaskSpec& task, const ParserConfig& config) {
  if (auto index = task.match_label(normalize_response(raw, config))) {
    return ParseOutcome::parsed(task.labels()[*index]);
  }
  return ParseOutcome::unparsed(std::string(raw));
}

}  // namespace promptsense
