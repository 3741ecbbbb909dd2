#include "promptsense/dataset.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"

namespace promptsense {

using nlohmann::json;

namespace {

std::string string_field(const json& doc, const char* name, std::size_t line, bool allow_integer = false) {
  if (!doc.contains(name)) {
    throw FormatError("line " + std::to_string(line) + ": missing field '" + name + "'", line);
  }
  const auto& value = doc[name];
  if (value.is_string()) return value.get<std::string>();
  if (allow_integer && value.is_number_integer()) return std::to_string(value.get<long long>());
  throw FormatError("line " + std::to_string(line) + ": field '" + name + "' must be a string", line);
}

}  // namespace

std::vector<LabeledExample> parse_dataset(std::string_view jsonl, const TaskSpec& task) {
  std::vector<LabeledExample> out;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= jsonl.size()) {
    const auto nl = jsonl.find('\n', pos);
    std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? jsonl.size() + 1 : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::parse_error&) {
      throw FormatError("line " + std::to_string(line_no) + ": not valid JSON", line_no);
    }
    if (!doc.is_object()) throw FormatError("line " + std::to_string(line_no) + ": expected a JSON object", line_no);

    LabeledExample ex;
    ex.id = string_field(doc, "id", line_no, true);
    ex.text = string_field(doc, "text", line_no);
    const std::string label = string_field(doc, "label", line_no);
    const auto index = task.match_label(canonical_form(label));
    if (!index) {
      throw LabelError("line " + std::to_string(line_no) + ": unknown label '" + label + "' for task '" + task.key() +
                       "' (expected '" + task.labels()[0] + "' or '" + task.labels()[1] + "')");
    }
    ex.gold = task.labels()[*index];
    if (!ids.insert(ex.id).second) {
      throw FormatError("line " + std::to_string(line_no) + ": duplicate example id '" + ex.id + "'", line_no);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, const TaskSpec& task) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_dataset(buffer.str(), task);
}

}  // namespace promptsense
