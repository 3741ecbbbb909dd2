#include "promptsense/run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"

namespace promptsense {

using nlohmann::json;

std::vector<SweepPoint> SweepSpec::grid() const {
  std::set<SweepPoint> points;
  for (const auto& [_, p] : axis(SweepAxis::temperature)) points.insert(p);
  for (const auto& [_, p] : axis(SweepAxis::top_p)) points.insert(p);
  return {points.begin(), points.end()};
}

AxisPoints SweepSpec::axis(SweepAxis which) const {
  AxisPoints out;
  if (which == SweepAxis::temperature) {
    for (double t : temperatures) out.push_back({t, {t, fixed_top_p}});
  } else {
    for (double p : top_ps) out.push_back({p, {fixed_temperature, p}});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  out.erase(std::unique(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.first == b.first; }),
            out.end());
  return out;
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

TaskSpec task_from_json(const json& j) {
  const auto key = j.at("name").get<std::string>();
  auto builtin = find_builtin_task(key);
  auto field = [&](const char* name, auto fallback) {
    using T = decltype(fallback);
    return j.contains(name) ? j[name].get<T>() : fallback;
  };
  if (!builtin && !(j.contains("problem_name") && j.contains("label_name") && j.contains("labels"))) {
    throw ConfigError("task '" + key + "' is not built in; problem_name, label_name and labels are required");
  }
  std::array<std::string, 2> labels = builtin ? builtin->labels() : std::array<std::string, 2>{};
  if (j.contains("labels")) {
    const auto list = j["labels"].get<std::vector<std::string>>();
    if (list.size() != 2) throw ConfigError("task '" + key + "' must have exactly two labels");
    labels = {list[0], list[1]};
  }
  std::optional<std::string> description;
  if (j.contains("labels_description")) {
    description = j["labels_description"].get<std::string>();
  } else if (builtin && !j.contains("labels")) {
    description = builtin->labels_description();
  }
  return TaskSpec(key, field("problem_name", builtin ? builtin->problem_name() : std::string()),
                  field("label_name", builtin ? builtin->label_name() : std::string()), labels, description);
}

}  // namespace

RunConfigDocument RunConfigDocument::from_json(std::string_view text, const std::filesystem::path& base_dir) {
  RunConfigDocument doc;
  try {
    const json j = json::parse(text);

    const json tasks = j.contains("tasks") ? j["tasks"] : (j.contains("task") ? json::array({j["task"]}) : json());
    if (!tasks.is_array() || tasks.empty()) throw ConfigError("config needs a non-empty 'tasks' list");
    for (const auto& t : tasks) {
      std::string dataset = t.value("dataset", j.value("dataset", std::string()));
      if (dataset.empty()) throw ConfigError("task '" + t.value("name", std::string("?")) + "' has no dataset path");
      doc.tasks.push_back({task_from_json(t), resolve(base_dir, dataset)});
    }

    const json& b = j.at("backend");
    const auto kind = b.at("kind").get<std::string>();
    if (kind == "remote") {
      doc.backend.kind = BackendSpec::Kind::remote;
    } else if (kind == "simulator") {
      doc.backend.kind = BackendSpec::Kind::simulator;
    } else {
      throw ConfigError("backend kind must be 'remote' or 'simulator', got '" + kind + "'");
    }
    doc.backend.model_id = b.value("model_id", doc.backend.model_id);
    doc.backend.base_url = b.value("base_url", doc.backend.base_url);
    doc.backend.max_in_flight = b.value("max_in_flight", doc.backend.max_in_flight);
    doc.backend.seed = b.value("seed", doc.backend.seed);
    if (b.contains("behavior")) {
      if (b["behavior"].is_string()) {
        doc.backend.behavior_file = resolve(base_dir, b["behavior"].get<std::string>());
      } else {
        doc.backend.behavior_json = b["behavior"].dump();
      }
    }

    doc.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("template_library")) doc.template_library = resolve(base_dir, j["template_library"].get<std::string>());

    const json& s = j.at("sweep");
    doc.sweep.temperatures = s.value("temperatures", std::vector<double>{});
    doc.sweep.top_ps = s.value("top_ps", std::vector<double>{});
    doc.sweep.fixed_top_p = s.value("fixed_top_p", doc.sweep.fixed_top_p);
    doc.sweep.fixed_temperature = s.value("fixed_temperature", doc.sweep.fixed_temperature);
    doc.sweep.repeats = s.value("repeats", doc.sweep.repeats);

    if (j.contains("stats")) {
      const json& st = j["stats"];
      doc.stats.n_samples = st.value("n_samples", doc.stats.n_samples);
      doc.stats.seed = st.value("seed", doc.stats.seed);
      doc.stats.ci_level = st.value("ci_level", doc.stats.ci_level);
      doc.stats.n_permutations = st.value("n_permutations", doc.stats.n_permutations);
      if (st.contains("unparsed_policy")) {
        doc.stats.unparsed_policy = unparsed_policy_from_string(st["unparsed_policy"].get<std::string>());
      }
    }
    if (j.contains("parser")) {
      const json& p = j["parser"];
      doc.parser.prefixes = p.value("prefixes", doc.parser.prefixes);
      if (p.contains("last_line_mode") && !p["last_line_mode"].is_null()) {
        doc.last_line_mode = p["last_line_mode"].get<bool>();
      }
    }
    doc.share_greedy_repeats = j.value("share_greedy_repeats", doc.share_greedy_repeats);
    if (j.contains("report")) {
      const json& r = j["report"];
      doc.report.point.temperature = r.value("temperature", doc.report.point.temperature);
      doc.report.point.top_p = r.value("top_p", doc.report.point.top_p);
      doc.report.base_template = r.value("base_template", doc.report.base_template);
    }
    doc.output_dir = resolve(base_dir, j.value("output_dir", std::string("out")));
    if (j.contains("cache_path")) doc.cache_path = resolve(base_dir, j["cache_path"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config document: ") + e.what());
  } catch (const InvalidInputError& e) {
    throw ConfigError(std::string("invalid config document: ") + e.what());
  }
  return doc;
}

RunConfigDocument RunConfigDocument::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str(), path.parent_path());
}

TemplateLibrary RunConfigDocument::library() const {
  return template_library ? TemplateLibrary::load(*template_library) : TemplateLibrary::builtin();
}

void RunConfigDocument::validate(const TemplateLibrary& library) const {
  if (tasks.empty()) throw ConfigError("no tasks configured");
  std::set<std::string> keys;
  for (const auto& t : tasks) {
    if (!keys.insert(t.task.key()).second) throw ConfigError("task '" + t.task.key() + "' listed twice");
  }
  if (templates.empty()) throw ConfigError("no templates configured");
  for (const auto& name : templates) {
    const auto* t = library.find(name);
    if (!t) throw UnknownTemplateError("unknown template '" + name + "'");
    if (t->kind == TemplateKind::fragment) throw NotRunnableError("template '" + name + "' is a fragment, not runnable");
  }
  if (sweep.temperatures.empty() && sweep.top_ps.empty()) throw ConfigError("sweep lists are empty");
  if (sweep.repeats < 1) throw ConfigError("sweep.repeats must be >= 1");
  for (double t : sweep.temperatures) {
    if (!(t >= 0.0)) throw ConfigError("sweep temperatures must be >= 0");
  }
  for (double p : sweep.top_ps) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep top_p values must lie in [0, 1]");
  }
  if (!(sweep.fixed_top_p >= 0.0 && sweep.fixed_top_p <= 1.0) || !(sweep.fixed_temperature >= 0.0)) {
    throw ConfigError("fixed sweep parameters out of range");
  }
  if (stats.n_samples < 1 || stats.n_permutations < 1) throw ConfigError("stats sample counts must be positive");
  if (!(stats.ci_level > 0.0 && stats.ci_level < 1.0)) throw ConfigError("stats.ci_level must lie in (0, 1)");
  if (backend.max_in_flight < 1) throw ConfigError("backend.max_in_flight must be >= 1");
  if (backend.model_id.empty()) throw ConfigError("backend.model_id is empty");
  try {
    parser.validate();
  } catch (const InvalidInputError& e) {
    throw ConfigError(e.what());
  }
}

std::filesystem::path RunConfigDocument::resolved_cache_path() const {
  return cache_path ? *cache_path : output_dir / "cache" / "responses.jsonl";
}

std::filesystem::path RunConfigDocument::pools_path(const std::string& task) const {
  return output_dir / "pools" / (task + ".jsonl");
}

std::filesystem::path RunConfigDocument::manifest_path(const std::string& task) const {
  return output_dir / "pools" / (task + ".manifest.json");
}

std::filesystem::path RunConfigDocument::analysis_dir() const { return output_dir / "analysis"; }

std::filesystem::path RunConfigDocument::report_dir() const { return output_dir / "report"; }

EvaluationPlan RunConfigDocument::plan_for(const TaskEntry& entry, std::vector<LabeledExample> examples) const {
  EvaluationPlan plan(entry.task);
  plan.examples = std::move(examples);
  plan.template_names = templates;
  plan.points = sweep.grid();
  plan.repeats = sweep.repeats;
  plan.model_id = backend.model_id;
  plan.seed = backend.kind == BackendSpec::Kind::simulator ? backend.seed : 0;
  plan.parser = parser;
  plan.last_line_mode = last_line_mode;
  plan.share_greedy_repeats = share_greedy_repeats;
  plan.max_in_flight = backend.max_in_flight;
  return plan;
}

std::string slug(std::string_view name) {
  std::string out;
  for (char c : name) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-';
    out += keep ? c : '_';
  }
  return out;
}

}  // namespace promptsense
