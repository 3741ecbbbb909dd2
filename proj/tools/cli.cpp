#include "cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "promptsense/chat.hpp"
#include "promptsense/dataset.hpp"
#include "promptsense/digest.hpp"
#include "promptsense/error.hpp"
#include "promptsense/orchestrator.hpp"
#include "promptsense/remote_backend.hpp"
#include "promptsense/report.hpp"
#include "promptsense/run_config.hpp"
#include "promptsense/simulator.hpp"
#include "promptsense/stats.hpp"
#include "promptsense/templates.hpp"

namespace promptsense::cli {
namespace fs = std::filesystem;

namespace {

// Maps library errors onto the documented exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const UnknownTemplateError& e) {
    err << "error: " << e.what() << "\n";
    return kTemplateError;
  } catch (const ResolutionError& e) {
    err << "error: " << e.what() << "\n";
    return kTemplateError;
  } catch (const CycleError& e) {
    err << "error: " << e.what() << "\n";
    return kTemplateError;
  } catch (const NotRunnableError& e) {
    err << "error: " << e.what() << "\n";
    return kTemplateError;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kIncompleteData;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const LabelError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NotFoundError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const InvalidInputError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

std::string percent_text(std::size_t part, std::size_t whole) {
  if (whole == 0) return "0%";
  const double pct = 100.0 * static_cast<double>(part) / static_cast<double>(whole);
  if (part == whole) return "100%";
  if (part == 0) return "0%";
  return format_fixed(pct, 1) + "%";
}

RunConfigDocument load_config(const CommonOptions& options) {
  RunConfigDocument doc = RunConfigDocument::load(options.config);
  if (options.out) doc.output_dir = *options.out;
  if (options.seed) {
    doc.stats.seed = *options.seed;
    doc.backend.seed = *options.seed;
  }
  return doc;
}

std::unique_ptr<ChatBackend> make_backend(const RunConfigDocument& doc) {
  if (doc.backend.kind == BackendSpec::Kind::remote) {
    auto key = api_key_from_env();
    if (!key) throw ConfigError(std::string("remote backend requires the ") + kApiKeyEnvVar + " environment variable");
    RemoteBackendOptions options;
    options.base_url = doc.backend.base_url;
    options.api_key = *key;
    options.max_in_flight = doc.backend.max_in_flight;
    return std::make_unique<RemoteBackend>(options, make_http_transport(options.base_url));
  }
  std::string behavior_text;
  BehaviorTable behavior;
  if (doc.backend.behavior_file) {
    behavior_text = read_file(*doc.backend.behavior_file);
    behavior = BehaviorTable::from_json(behavior_text);
  } else if (doc.backend.behavior_json) {
    behavior_text = *doc.backend.behavior_json;
    behavior = BehaviorTable::from_json(behavior_text);
  } else {
    behavior_text = "fixed_margin:2";
    behavior = BehaviorTable::fixed_margin(2.0);
  }
  // The id feeds the cache key, so different behaviors or seeds never share cached replies.
  const std::string id =
      "simulator:" + sha256_hex(behavior_text + "|" + std::to_string(doc.backend.seed)).substr(0, 16);
  auto sim = std::make_unique<SimulatedChatModel>(std::move(behavior), doc.backend.seed, id);
  sim->set_max_in_flight(doc.backend.max_in_flight);
  return sim;
}

struct LoadedTask {
  TaskPools data;
  RunManifest manifest;
};

// Loads datasets, manifests and pools for every configured task; records what is missing.
std::vector<LoadedTask> load_persisted(const RunConfigDocument& doc, bool allow_partial,
                                       std::vector<std::string>& gaps) {
  std::vector<LoadedTask> out;
  for (const auto& entry : doc.tasks) {
    const auto key = entry.task.key();
    auto examples = load_dataset(entry.dataset, entry.task);
    const auto manifest_path = doc.manifest_path(key);
    const auto pools_path = doc.pools_path(key);
    if (!fs::exists(manifest_path) || !fs::exists(pools_path)) {
      gaps.push_back("task '" + key + "': no pools/manifest under " + (doc.output_dir / "pools").string() +
                     " (run first)");
      continue;
    }
    RunManifest manifest = RunManifest::from_json(read_file(manifest_path));
    if (!manifest.complete && !allow_partial) {
      gaps.push_back("task '" + key + "': run is incomplete (" + std::to_string(manifest.failures.size()) +
                     " failed cells); rerun or pass --allow-partial");
    }
    PoolSet pools = read_pools(pools_path);
    for (auto& [_, pool] : pools) pool.repeats = static_cast<std::size_t>(doc.sweep.repeats);
    out.push_back({TaskPools{entry.task, std::move(examples), std::move(pools)}, std::move(manifest)});
  }
  return out;
}

void check_points(const TaskPools& data, const std::vector<std::string>& templates,
                  const std::vector<SweepPoint>& points, std::vector<std::string>& gaps) {
  for (const auto& name : templates) {
    for (const auto& p : points) {
      auto it = data.pools.find(PoolKey{name, p});
      const std::string where = "task '" + data.task.key() + "', template '" + name + "', T=" +
                                format_fixed(p.temperature, 2) + ", top_p=" + format_fixed(p.top_p, 2);
      if (it == data.pools.end()) {
        gaps.push_back(where + ": missing");
      } else if (!it->second.is_complete() || it->second.example_ids.size() != data.examples.size()) {
        gaps.push_back(where + ": incomplete pool");
      }
    }
  }
}

int report_gaps(const std::vector<std::string>& gaps, std::ostream& err) {
  err << "error: incomplete data (" << gaps.size() << " gaps)\n";
  for (const auto& g : gaps) err << "  " << g << "\n";
  return kIncompleteData;
}

}  // namespace

int cmd_render(const RenderOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::optional<TaskSpec> task;
    TemplateLibrary library = TemplateLibrary::builtin();
    if (options.config) {
      const auto doc = RunConfigDocument::load(*options.config);
      library = doc.library();
      for (const auto& t : doc.tasks) {
        if (t.task.key() == options.task) task = t.task;
      }
    }
    if (options.library) library = TemplateLibrary::load(*options.library);
    if (!task) task = find_builtin_task(options.task);
    if (!task) throw ConfigError("unknown task '" + options.task + "'");
    const auto* tmpl = library.find(options.template_name);
    if (tmpl && tmpl->kind == TemplateKind::fragment) {
      err << "error: template '" << tmpl->name << "' is a fragment not runnable on its own\n";
      return int(kTemplateError);
    }
    out << render_template(options.template_name, *task, library);
    return int(kOk);
  });
}

int cmd_validate(const std::optional<fs::path>& config, const std::optional<fs::path>& library_path,
                 std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    TemplateLibrary library = TemplateLibrary::builtin();
    if (config) library = RunConfigDocument::load(*config).library();
    if (library_path) library = TemplateLibrary::load(*library_path);
    const auto report = validate_library(library);
    if (report.ok()) {
      out << "template library OK (" << library.size() << " templates, digest " << library.digest().substr(0, 12)
          << ")\n";
      return int(kOk);
    }
    err << report.to_string();
    return int(kTemplateError);
  });
}

int cmd_run(const CommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfigDocument doc = load_config(options);
    const TemplateLibrary library = doc.library();
    doc.validate(library);
    auto backend = make_backend(doc);
    ResponseCache cache(doc.resolved_cache_path());
    CachingClient client(*backend, &cache);

    bool complete = true;
    for (const auto& entry : doc.tasks) {
      EvaluationPlan plan = doc.plan_for(entry, load_dataset(entry.dataset, entry.task));
      plan.allow_partial = options.allow_partial;
      const std::string key = entry.task.key();
      std::size_t next_report = 0;
      auto progress = [&](const RunProgress& p) {
        if (p.cells_done < next_report && p.cells_done != p.cells_total) return;
        next_report = p.cells_done + std::max<std::size_t>(p.cells_total / 10, 1);
        err << "[" << key << "] " << p.cells_done << "/" << p.cells_total << " cells, cache hits "
            << percent_text(p.cache_hits, p.cells_done) << "\n";
      };
      PlanResult result = run_plan(plan, client, library, progress);
      write_pools(doc.pools_path(key), result.pools);
      write_file(doc.manifest_path(key), result.manifest.to_json());

      const auto& m = result.manifest;
      out << key << ": " << m.cells << " cells, backend calls " << m.backend_calls << ", cache hits: "
          << percent_text(m.cache_hits, m.cells) << "\n";
      if (!m.complete) {
        err << key << ": " << m.failures.size() << " cells failed\n";
        for (std::size_t i = 0; i < std::min<std::size_t>(m.failures.size(), 5); ++i) {
          err << "  " << m.failures[i].error << "\n";
        }
        complete = false;
      }
    }
    if (!complete && !options.allow_partial) return int(kIncompleteData);
    return int(kOk);
  });
}

int cmd_analyze(const CommonOptions& options, bool svg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfigDocument doc = load_config(options);
    doc.validate(doc.library());
    std::vector<std::string> gaps;
    auto loaded = load_persisted(doc, options.allow_partial, gaps);
    const auto grid = doc.sweep.grid();
    for (const auto& t : loaded) check_points(t.data, doc.templates, grid, gaps);
    if (!gaps.empty()) return report_gaps(gaps, err);

    const std::vector<MetricKind> kinds = {{Metric::accuracy, doc.stats.unparsed_policy},
                                           {Metric::uar, doc.stats.unparsed_policy},
                                           {Metric::parsed_rate, doc.stats.unparsed_policy}};
    const MonteCarloConfig mc{doc.stats.n_samples, doc.stats.seed, doc.stats.ci_level, 0};
    std::string summary = "task,template,temperature,top_p,metric,mean,ci_lower,ci_upper,stddev\n";
    std::size_t files = 0;

    for (const auto& t : loaded) {
      const auto& data = t.data;
      for (const auto& name : doc.templates) {
        // Every grid point once; the axis curves below pick from these.
        std::map<SweepPoint, std::vector<std::optional<MetricDistribution>>> at_point;
        for (const auto& p : grid) {
          const CodedPool coded = encode_pool(data.pools.at(PoolKey{name, p}), data.examples, data.task);
          at_point[p] = mc_distributions(coded, kinds, mc);
          for (std::size_t k = 0; k < kinds.size(); ++k) {
            const auto& d = at_point[p][k];
            summary += data.task.key() + "," + name + "," + format_fixed(p.temperature, 6) + "," +
                       format_fixed(p.top_p, 6) + "," + std::string(to_string(kinds[k].metric)) + ",";
            summary += d ? format_fixed(d->mean, 6) + "," + format_fixed(d->ci_lower, 6) + "," +
                               format_fixed(d->ci_upper, 6) + "," + format_fixed(d->stddev(), 6)
                         : std::string("nan,nan,nan,nan");
            summary += "\n";
          }
        }
        for (SweepAxis axis : {SweepAxis::temperature, SweepAxis::top_p}) {
          const auto points = doc.sweep.axis(axis);
          if (points.empty()) continue;
          for (std::size_t k = 0; k < kinds.size(); ++k) {
            SensitivityCurve curve;
            curve.task = data.task.key();
            curve.template_name = name;
            curve.metric = kinds[k].metric;
            curve.axis = axis;
            for (const auto& [param, p] : points) {
              const auto& d = at_point.at(p)[k];
              const double nan = std::nan("");
              curve.points.push_back(d ? CurvePoint{param, d->mean, d->ci_lower, d->ci_upper}
                                       : CurvePoint{param, nan, nan, nan});
            }
            const fs::path base = doc.analysis_dir() / data.task.key() /
                                  (slug(name) + "__" + std::string(to_string(curve.metric)) + "__" +
                                   std::string(to_string(axis)));
            write_file(fs::path(base.string() + ".csv"), curve_to_csv(curve));
            ++files;
            if (svg) {
              write_file(fs::path(base.string() + ".svg"), curve_to_svg(curve));
              ++files;
            }
          }
        }
      }
    }
    write_file(doc.analysis_dir() / "summary.csv", summary);
    out << "analysis: " << files << " curve files and summary.csv written to " << doc.analysis_dir().string() << "\n";
    return int(kOk);
  });
}

int cmd_report(const CommonOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfigDocument doc = load_config(options);
    doc.validate(doc.library());
    const auto& base = doc.report.base_template;
    if (std::find(doc.templates.begin(), doc.templates.end(), base) == doc.templates.end()) {
      err << "error: the reference template '" << base << "' must be part of the configured templates\n";
      return int(kConfigError);
    }
    std::vector<std::string> gaps;
    auto loaded = load_persisted(doc, options.allow_partial, gaps);
    for (const auto& t : loaded) check_points(t.data, doc.templates, {doc.report.point}, gaps);
    if (!gaps.empty()) return report_gaps(gaps, err);

    std::vector<TaskPools> data;
    for (auto& t : loaded) data.push_back(std::move(t.data));
    ResultsOptions ro;
    ro.base_template = base;
    ro.point = doc.report.point;
    ro.policy = doc.stats.unparsed_policy;
    ro.n_permutations = doc.stats.n_permutations;
    ro.seed = doc.stats.seed;
    const ResultsTable table = build_results_table(data, doc.templates, ro);
    const std::string markdown = results_to_markdown(table);
    write_file(doc.report_dir() / "results.csv", results_to_csv(table));
    write_file(doc.report_dir() / "results.md", markdown);
    out << markdown;
    return int(kOk);
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"promptsense: prompt-sensitivity evaluation harness"};
  app.require_subcommand(1);

  RenderOptions render;
  auto* render_cmd = app.add_subcommand("render", "Print a fully resolved prompt template");
  render_cmd->add_option("--template,-t", render.template_name, "Template name")->required();
  render_cmd->add_option("--task", render.task, "Task key (sentiment, toxicity, sarcasm or one from --config)");
  render_cmd->add_option("--config", render.config, "Config document (for task overrides and library)");
  render_cmd->add_option("--library", render.library, "Template library JSON");

  std::optional<fs::path> validate_config;
  std::optional<fs::path> validate_library_path;
  auto* validate_cmd = app.add_subcommand("validate", "Check a template library");
  validate_cmd->add_option("--config", validate_config, "Config document");
  validate_cmd->add_option("--library", validate_library_path, "Template library JSON");

  CommonOptions common;
  bool svg = false;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config, "Config document")->required();
    cmd->add_option("--out", common.out, "Output directory (overrides output_dir)");
    cmd->add_flag("--allow-partial", common.allow_partial, "Accept runs with failed cells");
    cmd->add_option("--seed", common.seed, "Override the statistics and simulator seed");
  };
  auto* run_cmd = app.add_subcommand("run", "Query the backend for every cell of the plan");
  add_common(run_cmd);
  auto* analyze_cmd = app.add_subcommand("analyze", "Monte Carlo sensitivity curves from persisted pools");
  add_common(analyze_cmd);
  analyze_cmd->add_flag("--svg", svg, "Also emit SVG charts");
  auto* report_cmd = app.add_subcommand("report", "Results table with significance markers");
  add_common(report_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? int(kOk) : int(kConfigError);
  }

  if (render_cmd->parsed()) return cmd_render(render, out, err);
  if (validate_cmd->parsed()) return cmd_validate(validate_config, validate_library_path, out, err);
  if (run_cmd->parsed()) return cmd_run(common, out, err);
  if (analyze_cmd->parsed()) return cmd_analyze(common, svg, out, err);
  if (report_cmd->parsed()) return cmd_report(common, out, err);
  return int(kFailure);
}

}  // namespace promptsense::cli
