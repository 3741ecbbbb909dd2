#include "promptsense/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "promptsense/digest.hpp"
#include "promptsense/error.hpp"

namespace promptsense {

using nlohmann::json;

bool PredictionPool::is_complete() const {
  if (entries.size() != example_ids.size()) return false;
  for (const auto& row : entries) {
    if (row.size() != repeats) return false;
    for (std::size_t r = 0; r < row.size(); ++r) {
      if (row[r].repeat != static_cast<int>(r)) return false;
    }
  }
  return true;
}

void PredictionPool::require_complete() const {
  if (entries.size() != example_ids.size()) throw ShapeError("pool has mismatched example and entry counts");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& row = entries[i];
    bool ok = row.size() == repeats;
    for (std::size_t r = 0; ok && r < row.size(); ++r) ok = row[r].repeat == static_cast<int>(r);
    if (!ok) {
      throw ShapeError("example '" + example_ids[i] + "' has " + std::to_string(row.size()) + " of " +
                       std::to_string(repeats) + " repeats");
    }
  }
}

bool is_verbose_template(const TemplateLibrary& library, std::string_view name) {
  std::set<std::string, std::less<>> seen;
  std::vector<const PromptTemplate*> stack;
  if (const auto* t = library.find(name)) stack.push_back(t);
  while (!stack.empty()) {
    const auto* t = stack.back();
    stack.pop_back();
    if (t->name == "CoT Instructions") return true;
    if (!seen.insert(t->name).second) continue;
    for (const auto& ph : t->placeholders()) {
      if (const auto* inc = library.resolve_include(ph)) stack.push_back(inc);
    }
  }
  return false;
}

void EvaluationPlan::validate(const TemplateLibrary& library) const {
  if (repeats < 1) throw ConfigError("repeats must be >= 1");
  if (template_names.empty()) throw ConfigError("plan has no templates");
  if (points.empty()) throw ConfigError("plan has no sweep points");
  if (examples.empty()) throw ConfigError("plan has no examples");
  if (model_id.empty()) throw ConfigError("plan has no model id");
  parser.validate();
  for (const auto& p : points) {
    if (!(p.temperature >= 0.0)) throw ConfigError("sweep temperature must be >= 0");
    if (!(p.top_p >= 0.0 && p.top_p <= 1.0)) throw ConfigError("sweep top_p must lie in [0, 1]");
  }
  for (const auto& name : template_names) {
    const auto* t = library.find(name);
    if (!t) throw UnknownTemplateError("unknown template '" + name + "'");
    if (t->kind == TemplateKind::fragment) throw NotRunnableError("template '" + name + "' is a fragment");
    if (t->kind == TemplateKind::followup) {
      const auto* base = t->base ? library.find(*t->base) : nullptr;
      if (!base || base->kind != TemplateKind::prompt) {
        throw NotRunnableError("follow-up template '" + name + "' does not reference a runnable base template");
      }
    }
  }
}

std::string EvaluationPlan::digest() const {
  json examples_json = json::array();
  for (const auto& e : examples) examples_json.push_back(json::array({e.id, e.text, e.gold}));
  json points_json = json::array();
  for (const auto& p : points) points_json.push_back(json::array({p.temperature, p.top_p}));
  json doc = json::array({"promptsense-plan/1", task.key(), task.problem_name(), task.label_name(), task.labels(),
                          task.labels_description(), template_names, points_json, repeats, model_id, seed,
                          parser.prefixes, last_line_mode ? json(*last_line_mode) : json(nullptr),
                          max_tokens_direct, max_tokens_verbose, share_greedy_repeats, examples_json});
  return sha256_hex(doc.dump());
}

namespace {

using CompleteFn = std::function<CachingClient::Completion(const ChatRequest&)>;

CallContext make_context(const LabeledExample& example, std::string_view template_name, const TaskSpec& task,
                         std::string turn) {
  CallContext ctx;
  ctx.task = task.key();
  ctx.template_name = std::string(template_name);
  ctx.example_id = example.id;
  ctx.turn = std::move(turn);
  ctx.gold = example.gold;
  ctx.labels = task.labels();
  return ctx;
}

std::string cell_tag(const LabeledExample& example, std::string_view template_name, const GenerationConfig& config) {
  return "[example '" + example.id + "', template '" + std::string(template_name) + "', repeat " +
         std::to_string(config.repeat_index) + "] ";
}

// Re-throws the in-flight backend error with the cell tag prepended, keeping its type.
[[noreturn]] void rethrow_tagged(const std::string& tag) {
  try {
    throw;
  } catch (const MissingBaseResponseError& e) {
    throw MissingBaseResponseError(tag + e.what(), e.cache_key(), e.attempts());
  } catch (const RateLimitError& e) {
    throw RateLimitError(tag + e.what(), e.cache_key(), e.attempts());
  } catch (const TransportError& e) {
    throw TransportError(tag + e.what(), e.cache_key(), e.attempts());
  } catch (const ProtocolError& e) {
    throw ProtocolError(tag + e.what(), e.cache_key(), e.attempts());
  } catch (const BackendError& e) {
    throw BackendError(tag + e.what(), e.cache_key(), e.attempts());
  }
}

CellResult single_with(const CompleteFn& complete_fn, const LabeledExample& example, std::string_view template_name,
                       const TaskSpec& task, const GenerationConfig& config, const ParserConfig& parser,
                       const TemplateLibrary& library) {
  const auto* tmpl = library.find(template_name);
  if (!tmpl) throw UnknownTemplateError("unknown template '" + std::string(template_name) + "'");
  if (tmpl->kind != TemplateKind::prompt) {
    throw NotRunnableError("template '" + tmpl->name + "' is not a standalone prompt");
  }
  ChatRequest request{{{Role::system, render_template(template_name, task, library)}, {Role::user, example.text}},
                      config,
                      make_context(example, template_name, task, "predict")};
  try {
    auto reply = complete_fn(request);
    return {parse_label(reply.content, task, parser), std::move(reply.content), reply.from_cache};
  } catch (const BackendError&) {
    rethrow_tagged(cell_tag(example, template_name, config));
  }
}

VerificationResult verification_with(const CompleteFn& complete_fn, const LabeledExample& example,
                                     std::string_view base_name, std::string_view verify_name, const TaskSpec& task,
                                     const GenerationConfig& config, const ParserConfig& parser,
                                     const TemplateLibrary& library) {
  const auto* verify = library.find(verify_name);
  if (!verify) throw UnknownTemplateError("unknown template '" + std::string(verify_name) + "'");
  if (verify->kind != TemplateKind::followup) {
    throw NotRunnableError("template '" + verify->name + "' is not a follow-up template");
  }
  const auto* base = library.find(base_name);
  if (!base) throw UnknownTemplateError("unknown template '" + std::string(base_name) + "'");
  if (base->kind != TemplateKind::prompt) throw NotRunnableError("template '" + base->name + "' is not runnable");

  std::vector<ChatMessage> messages = {{Role::system, render_template(base_name, task, library)},
                                       {Role::user, example.text}};
  CachingClient::Completion base_reply;
  try {
    base_reply = complete_fn(ChatRequest{messages, config, make_context(example, base_name, task, "predict")});
  } catch (const BackendError& e) {
    throw MissingBaseResponseError(cell_tag(example, verify_name, config) +
                                       "base conversation failed, no verbose response to verify: " + e.what(),
                                   e.cache_key(), e.attempts());
  }

  messages.push_back({Role::assistant, base_reply.content});
  messages.push_back({Role::user, render_template(verify_name, task, library)});
  GenerationConfig final_config = config;
  final_config.max_tokens = std::min(config.max_tokens, 16);
  ParserConfig final_parser = parser;
  final_parser.last_line_mode = false;
  try {
    auto reply = complete_fn(ChatRequest{std::move(messages), final_config,
                                         make_context(example, verify_name, task, "verify")});
    return {parse_label(reply.content, task, final_parser), std::move(base_reply.content), std::move(reply.content),
            base_reply.from_cache && reply.from_cache};
  } catch (const BackendError&) {
    rethrow_tagged(cell_tag(example, verify_name, config));
  }
}

}  // namespace

CellResult run_single(const LabeledExample& example, std::string_view template_name, const TaskSpec& task,
                      CachingClient& client, const GenerationConfig& config, const ParserConfig& parser,
                      const TemplateLibrary& library) {
  return single_with([&](const ChatRequest& r) { return client.complete(r); }, example, template_name, task, config,
                     parser, library);
}

VerificationResult run_verification(const LabeledExample& example, std::string_view base_template_name,
                                    std::string_view verify_template_name, const TaskSpec& task,
                                    CachingClient& client, const GenerationConfig& config,
                                    const ParserConfig& parser, const TemplateLibrary& library) {
  return verification_with([&](const ChatRequest& r) { return client.complete(r); }, example, base_template_name,
                           verify_template_name, task, config, parser, library);
}

PlanResult run_plan(const EvaluationPlan& plan, CachingClient& client, const TemplateLibrary& library,
                    const std::function<void(const RunProgress&)>& progress) {
  plan.validate(library);

  PlanResult result;
  RunManifest& manifest = result.manifest;
  manifest.task = plan.task.key();
  manifest.plan_digest = plan.digest();
  manifest.library_digest = library.digest();
  manifest.backend_id = client.backend().id();
  manifest.started_at = utc_timestamp();
  manifest.examples = plan.examples.size();
  manifest.templates = plan.template_names.size();
  manifest.points = plan.points.size();
  manifest.repeats = static_cast<std::size_t>(plan.repeats);
  manifest.cells = manifest.examples * manifest.templates * manifest.points * manifest.repeats;
  manifest.partial_allowed = plan.allow_partial;

  const std::size_t n_examples = plan.examples.size();
  const std::size_t n_points = plan.points.size();
  const std::size_t n_units = plan.template_names.size() * n_points * n_examples;
  const auto repeats = static_cast<std::size_t>(plan.repeats);

  struct TemplatePlan {
    const PromptTemplate* tmpl;
    ParserConfig parser;
    int max_tokens;
  };
  std::vector<TemplatePlan> templates;
  for (const auto& name : plan.template_names) {
    const auto* t = library.find(name);
    const std::string& parse_name = t->kind == TemplateKind::followup ? *t->base : name;
    const bool verbose = is_verbose_template(library, parse_name);
    ParserConfig parser = plan.parser;
    parser.last_line_mode = plan.last_line_mode.value_or(verbose);
    templates.push_back({t, parser, verbose ? plan.max_tokens_verbose : plan.max_tokens_direct});
  }

  // One slot per cell; filled by whichever worker runs the unit.
  std::vector<std::optional<PoolEntry>> slots(n_units * repeats);
  std::vector<CellFailure> failures;
  std::mutex failures_mutex;
  std::atomic<std::size_t> next_unit{0};
  std::atomic<std::size_t> cells_done{0};
  std::atomic<std::size_t> cell_calls{0};
  std::atomic<std::size_t> cell_hits{0};
  std::mutex progress_mutex;
  const std::size_t requests_before = client.backend_calls();

  auto run_unit = [&](std::size_t unit) {
    const std::size_t example_index = unit % n_examples;
    const std::size_t point_index = (unit / n_examples) % n_points;
    const std::size_t template_index = unit / (n_examples * n_points);
    const auto& tp = templates[template_index];
    const auto& example = plan.examples[example_index];
    const SweepPoint point = plan.points[point_index];
    std::optional<std::string> first_failure;

    for (std::size_t r = 0; r < repeats; ++r) {
      GenerationConfig config{plan.model_id, point.temperature, point.top_p, tp.max_tokens, static_cast<int>(r),
                              plan.seed};
      const bool shared = plan.share_greedy_repeats && point.temperature == 0.0 && r > 0;
      CompleteFn complete_fn;
      if (shared) {
        complete_fn = [&client](const ChatRequest& request) {
          ChatRequest source = request;
          source.config.repeat_index = 0;
          return client.complete_as(request, source);
        };
      } else {
        complete_fn = [&client](const ChatRequest& request) { return client.complete(request); };
      }

      PoolEntry entry;
      entry.repeat = static_cast<int>(r);
      bool ok = false;
      bool from_cache = false;
      std::string error;
      std::string key;
      if (shared && first_failure) {
        error = "repeat 0 failed: " + *first_failure;
      } else {
        try {
          if (tp.tmpl->kind == TemplateKind::followup) {
            auto v = verification_with(complete_fn, example, *tp.tmpl->base, tp.tmpl->name, plan.task, config,
                                       tp.parser, library);
            entry.raw = std::move(v.final_raw);
            entry.outcome = std::move(v.outcome);
            from_cache = v.from_cache;
          } else {
            auto s = single_with(complete_fn, example, tp.tmpl->name, plan.task, config, tp.parser, library);
            entry.raw = std::move(s.raw);
            entry.outcome = std::move(s.outcome);
            from_cache = s.from_cache;
          }
          ok = true;
        } catch (const BackendError& e) {
          error = e.what();
          key = e.cache_key();
        } catch (const Error& e) {
          error = e.what();
        }
      }

      const std::size_t slot = unit * repeats + r;
      if (ok) {
        slots[slot] = std::move(entry);
        (from_cache ? cell_hits : cell_calls)++;
      } else {
        if (r == 0) first_failure = error;
        {
          std::lock_guard lock(failures_mutex);
          failures.push_back({example.id, tp.tmpl->name, point, static_cast<int>(r), error, key});
        }
        if (plan.allow_partial) slots[slot] = PoolEntry{static_cast<int>(r), "", ParseOutcome::unparsed("")};
      }
      const std::size_t done = ++cells_done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress({done, manifest.cells, cell_hits.load()});
      }
    }
  };

  std::size_t workers = plan.max_in_flight ? plan.max_in_flight : client.backend().max_in_flight();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n_units, 1));
  auto worker = [&] {
    for (std::size_t unit; (unit = next_unit.fetch_add(1)) < n_units;) run_unit(unit);
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  for (std::size_t t = 0; t < templates.size(); ++t) {
    for (std::size_t p = 0; p < n_points; ++p) {
      PredictionPool pool;
      pool.repeats = repeats;
      for (std::size_t i = 0; i < n_examples; ++i) {
        pool.example_ids.push_back(plan.examples[i].id);
        std::vector<PoolEntry> row;
        const std::size_t unit = (t * n_points + p) * n_examples + i;
        for (std::size_t r = 0; r < repeats; ++r) {
          if (auto& slot = slots[unit * repeats + r]) row.push_back(std::move(*slot));
        }
        pool.entries.push_back(std::move(row));
      }
      result.pools.emplace(PoolKey{plan.template_names[t], plan.points[p]}, std::move(pool));
    }
  }

  std::sort(failures.begin(), failures.end(), [](const CellFailure& a, const CellFailure& b) {
    return std::tie(a.template_name, a.point, a.example_id, a.repeat) <
           std::tie(b.template_name, b.point, b.example_id, b.repeat);
  });
  manifest.failures = std::move(failures);
  manifest.backend_calls = cell_calls.load();
  manifest.cache_hits = cell_hits.load();
  manifest.backend_requests = client.backend_calls() - requests_before;
  manifest.complete = manifest.failures.empty();
  manifest.finished_at = utc_timestamp();
  return result;
}

std::string RunManifest::to_json() const {
  json failures_json = json::array();
  for (const auto& f : failures) {
    failures_json.push_back({{"example_id", f.example_id},
                             {"template", f.template_name},
                             {"temperature", f.point.temperature},
                             {"top_p", f.point.top_p},
                             {"repeat", f.repeat},
                             {"error", f.error},
                             {"cache_key", f.cache_key}});
  }
  json doc = {{"task", task},
              {"plan_digest", plan_digest},
              {"library_digest", library_digest},
              {"backend_id", backend_id},
              {"started_at", started_at},
              {"finished_at", finished_at},
              {"counts",
               {{"examples", examples},
                {"templates", templates},
                {"points", points},
                {"repeats", repeats},
                {"cells", cells},
                {"backend_calls", backend_calls},
                {"cache_hits", cache_hits},
                {"backend_requests", backend_requests}}},
              {"complete", complete},
              {"partial_allowed", partial_allowed},
              {"failures", std::move(failures_json)}};
  return doc.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  try {
    const json doc = json::parse(text);
    RunManifest m;
    m.task = doc.at("task").get<std::string>();
    m.plan_digest = doc.at("plan_digest").get<std::string>();
    m.library_digest = doc.at("library_digest").get<std::string>();
    m.backend_id = doc.at("backend_id").get<std::string>();
    m.started_at = doc.value("started_at", std::string());
    m.finished_at = doc.value("finished_at", std::string());
    const auto& c = doc.at("counts");
    m.examples = c.at("examples").get<std::size_t>();
    m.templates = c.at("templates").get<std::size_t>();
    m.points = c.at("points").get<std::size_t>();
    m.repeats = c.at("repeats").get<std::size_t>();
    m.cells = c.at("cells").get<std::size_t>();
    m.backend_calls = c.at("backend_calls").get<std::size_t>();
    m.cache_hits = c.at("cache_hits").get<std::size_t>();
    m.backend_requests = c.value("backend_requests", std::size_t{0});
    m.complete = doc.at("complete").get<bool>();
    m.partial_allowed = doc.value("partial_allowed", false);
    for (const auto& f : doc.value("failures", json::array())) {
      m.failures.push_back({f.at("example_id").get<std::string>(), f.at("template").get<std::string>(),
                            {f.at("temperature").get<double>(), f.at("top_p").get<double>()},
                            f.at("repeat").get<int>(), f.value("error", std::string()),
                            f.value("cache_key", std::string())});
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
}

}  // namespace promptsense
