// Acceptance suite: one PASS/FAIL line per criterion. Usage: acceptance [work_dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "oracles.hpp"
#include "promptsense/parser.hpp"
#include "promptsense/random.hpp"
#include "promptsense/sampling.hpp"
#include "promptsense/stats.hpp"
#include "promptsense/templates.hpp"

namespace fs = std::filesystem;
using namespace promptsense;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary | std::ios::trunc) << text;
}

std::vector<double> random_logits(RandomStream& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.uniform() * 2 - 1) * scale;
  return v;
}

std::size_t oracle_argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "promptsense");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

// 1. empirical sample_token frequencies against the analytic shaped distribution
Verdict sampling_fidelity() {
  const auto t0 = Clock::now();
  RandomStream gen(20240101);
  double worst = 0, worst_formula = 0;
  for (int v = 0; v < 20; ++v) {
    const std::size_t n = 2 + gen.below(9);
    const auto logits = random_logits(gen, n, 3.0);
    const double t = 0.25 + gen.uniform() * 1.75;
    const double top_p = v % 2 ? 1.0 : 0.3 + gen.uniform() * 0.7;

    // the library's temperature step against the plain formula
    const auto scaled = apply_temperature(LogitVector(logits), t);
    double z = 0;
    for (double l : logits) z += std::exp(l / t);
    for (std::size_t k = 0; k < n; ++k) worst_formula = std::max(worst_formula, std::abs(scaled[k] - std::exp(logits[k] / t) / z));

    const auto dist = nucleus_filter(scaled, top_p);
    RandomStream rng(derive_seed(7, {static_cast<std::uint64_t>(v)}));
    std::vector<double> counts(n, 0);
    const int draws = 1000000;
    for (int d = 0; d < draws; ++d) counts[sample_token(dist, rng)] += 1;
    for (std::size_t k = 0; k < n; ++k) worst = std::max(worst, std::abs(counts[k] / draws - dist[k]));
  }
  const double secs = seconds_since(t0);
  return {worst < 0.005 && worst_formula < 1e-12 && secs < 60,
          "max per-token deviation " + fmt("%.5f", worst) + " (< 0.005), formula error " + fmt("%.1e", worst_formula) +
              ", " + fmt("%.1f", secs) + " s (< 60 s)"};
}

// 2. greedy limits and flattening with temperature
Verdict limit_behaviors() {
  RandomStream gen(2);
  int mismatches = 0;
  for (int v = 0; v < 1000; ++v) {
    const std::size_t n = 2 + gen.below(9);
    std::vector<double> logits(n);
    // integer logits so ties happen regularly
    for (auto& x : logits) x = static_cast<double>(gen.below(5));
    const std::size_t want = oracle_argmax(logits);
    RandomStream r1(v), r2(v + 1000);
    const auto greedy = apply_temperature(LogitVector(logits), 0.0);
    const auto nucleus = nucleus_filter(softmax(LogitVector(logits)), 0.0);
    mismatches += sample_token(greedy, r1) != want;
    mismatches += sample_token(nucleus, r2) != want;
  }
  int violations = 0, tested = 0;
  while (tested < 100) {
    const std::size_t n = 2 + gen.below(9);
    const auto logits = random_logits(gen, n, 4.0);
    if (std::all_of(logits.begin(), logits.end(), [&](double x) { return x == logits[0]; })) continue;
    ++tested;
    double last = INFINITY;
    for (double t : {1.0, 2.0, 10.0, 100.0}) {
      const auto d = apply_temperature(LogitVector(logits), t);
      double l1 = 0;
      for (double p : d.probs()) l1 += std::abs(p - 1.0 / n);
      if (l1 > last) ++violations;
      last = l1;
    }
  }
  return {mismatches == 0 && violations == 0,
          std::to_string(mismatches) + " argmax mismatches over 2x1000 draws, " + std::to_string(violations) +
              " L1-to-uniform increases over 100 vectors"};
}

// 3. rendered templates against the checked-in goldens
Verdict template_goldens() {
  const std::vector<std::string> runnable = {"Base",         "Expert",        "Expert Detailed", "Ignorant", "Gambler",
                                             "Greedy Gambler", "Python Expert", "CoT",           "CoT-DB",   "CoT-fired",
                                             "CoT-DB-fired",  "Expert CoT",    "Expert CoT-DB"};
  const auto& lib = TemplateLibrary::builtin();
  int matched = 0, total = 0;
  std::string first_bad;
  for (const auto& task : builtin_tasks()) {
    for (auto name : runnable) {
      ++total;
      std::string file = name;
      std::replace(file.begin(), file.end(), ' ', '_');
      const fs::path golden = fs::path(PROMPTSENSE_FIXTURES) / "golden" / task.key() / (file + ".txt");
      if (fs::exists(golden) && render_template(name, task, lib) == slurp(golden)) {
        ++matched;
      } else if (first_bad.empty()) {
        first_bad = task.key() + "/" + name;
      }
    }
  }
  const auto report = validate_library(lib);
  return {matched == total && total == 39 && report.ok(),
          std::to_string(matched) + "/" + std::to_string(total) + " byte matches, " +
              std::to_string(report.issues.size()) + " validation diagnostics" +
              (first_bad.empty() ? "" : ", first mismatch " + first_bad)};
}

CodedPool random_pool(RandomStream& gen, std::size_t n, std::size_t r) {
  CodedPool pool;
  pool.examples = n;
  pool.repeats = r;
  for (std::size_t i = 0; i < n; ++i) {
    pool.golds.push_back(static_cast<LabelCode>(i % 2));  // both classes present for UAR
    const double p_right = gen.uniform();
    for (std::size_t k = 0; k < r; ++k) {
      const double u = gen.uniform();
      LabelCode c = u < p_right ? pool.golds[i] : static_cast<LabelCode>(1 - pool.golds[i]);
      if (gen.uniform() < 0.1) c = kUnparsed;
      pool.codes.push_back(c);
    }
  }
  return pool;
}

std::vector<std::vector<int>> as_ints(const CodedPool& p) {
  std::vector<std::vector<int>> out(p.examples);
  for (std::size_t i = 0; i < p.examples; ++i)
    for (std::size_t k = 0; k < p.repeats; ++k) out[i].push_back(p.at(i, k));
  return out;
}

// 4. Monte Carlo means against exact expectation and enumeration
Verdict monte_carlo_oracle() {
  RandomStream gen(4);
  MonteCarloConfig config;
  config.n_samples = 16384;
  config.seed = 11;
  const MetricKind acc{Metric::accuracy, UnparsedPolicy::count_as_incorrect};
  int fails = 0;
  double worst_z = 0;
  for (int t = 0; t < 50; ++t) {
    const auto pool = random_pool(gen, 1 + gen.below(20), 1 + gen.below(9));
    const auto d = mc_distribution(pool, acc, config);
    const double exact = exact_expected_accuracy(pool, UnparsedPolicy::count_as_incorrect);
    const double se = d.stddev() / std::sqrt(static_cast<double>(config.n_samples));
    const double diff = std::abs(d.mean - exact);
    if (se > 0) worst_z = std::max(worst_z, diff / se);
    if (diff > 3 * se + 1e-12) ++fails;
  }
  int enum_fails = 0;
  for (int t = 0; t < 20; ++t) {
    const auto pool = random_pool(gen, 2 + gen.below(2), 2);
    const auto ints = as_ints(pool);
    const std::vector<int> golds(pool.golds.begin(), pool.golds.end());
    for (Metric m : {Metric::accuracy, Metric::uar, Metric::parsed_rate}) {
      const MetricKind kind{m, UnparsedPolicy::count_as_incorrect};
      const double want = oracle::enumerate_mean(ints, golds, [&](auto& p, auto& g) {
        if (m == Metric::uar) return oracle::uar(p, g, oracle::Policy::incorrect);
        if (m == Metric::parsed_rate) return oracle::parsed_rate(p);
        return oracle::accuracy(p, g, oracle::Policy::incorrect);
      });
      const auto d = mc_distribution(pool, kind, config);
      const double se = d.stddev() / std::sqrt(static_cast<double>(config.n_samples));
      if (std::abs(d.mean - want) > 3 * se + 1e-12) ++enum_fails;
    }
  }
  int width_fails = 0;
  for (int t = 0; t < 10; ++t) {
    CodedPool pool = random_pool(gen, 1 + gen.below(20), 1 + gen.below(9));
    for (std::size_t i = 0; i < pool.examples; ++i)
      for (std::size_t k = 1; k < pool.repeats; ++k) pool.codes[i * pool.repeats + k] = pool.at(i, 0);
    for (Metric m : {Metric::accuracy, Metric::parsed_rate}) {
      if (mc_distribution(pool, {m, UnparsedPolicy::count_as_incorrect}, config).ci_width() != 0.0) ++width_fails;
    }
  }
  return {fails == 0 && enum_fails == 0 && width_fails == 0,
          std::to_string(fails) + "/50 random pools outside 3 stderr (worst " + fmt("%.2f", worst_z) + " stderr), " +
              std::to_string(enum_fails) + "/60 enumeration mismatches, " + std::to_string(width_fails) +
              "/20 degenerate pools with non-zero width"};
}

// 5. randomized permutation p against the exhaustive one
Verdict permutation_oracle() {
  RandomStream gen(5);
  const MetricKind acc{Metric::accuracy, UnparsedPolicy::count_as_incorrect};
  int fails = 0;
  double worst_z = 0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 4 + gen.below(9);
    std::vector<LabelCode> g(n), a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      g[i] = static_cast<LabelCode>(gen.below(2));
      a[i] = gen.uniform() < 0.8 ? g[i] : static_cast<LabelCode>(1 - g[i]);
      b[i] = gen.uniform() < 0.4 ? g[i] : static_cast<LabelCode>(1 - g[i]);
      if (gen.uniform() < 0.1) b[i] = kUnparsed;
    }
    const std::vector<int> gi(g.begin(), g.end()), ai(a.begin(), a.end()), bi(b.begin(), b.end());
    const double exact = oracle::exact_permutation_p(ai, bi, gi, [](auto& p, auto& gg) {
      return oracle::accuracy(p, gg, oracle::Policy::incorrect);
    });
    const auto r = permutation_test(a, b, g, acc, 10000, derive_seed(55, {static_cast<std::uint64_t>(t)}));
    const double se = std::sqrt(exact * (1 - exact) / 10000.0);
    const double diff = std::abs(r.p_value - exact);
    if (se > 0) worst_z = std::max(worst_z, diff / se);
    if (se > 0 ? diff > 3 * se : diff != 0.0) ++fails;
  }
  std::vector<LabelCode> same = {0, 1, 1, 0, kUnparsed, 1}, gold = {0, 1, 0, 0, 1, 1};
  const bool identical_ok = permutation_test(same, same, gold, acc, 10000, 1).p_value == 1.0;
  return {fails == 0 && identical_ok, std::to_string(fails) + "/20 sets outside 3 binomial stderr (worst " +
                                          fmt("%.2f", worst_z) + "), identical inputs p " +
                                          (identical_ok ? "== 1.0" : "!= 1.0")};
}

// 6. parser fixture file
Verdict parser_fixtures() {
  const auto cases = nlohmann::json::parse(slurp(fs::path(PROMPTSENSE_FIXTURES) / "parser_cases.json"));
  int ok = 0;
  bool think_case = false;
  for (const auto& c : cases) {
    const auto task = *find_builtin_task(c.at("task").get<std::string>());
    ParserConfig config;
    config.last_line_mode = c.value("last_line_mode", false);
    const auto raw = c.at("raw").get<std::string>();
    const auto want = c.at("expect").is_null() ? ParseOutcome::unparsed(raw)
                                               : ParseOutcome::parsed(c.at("expect").get<std::string>());
    const bool match = parse_label(raw, task, config) == want;
    ok += match;
    if (raw == "I think it is positive") think_case = match && !want.is_parsed();
  }
  return {ok == 40 && cases.size() == 40 && think_case,
          std::to_string(ok) + "/" + std::to_string(cases.size()) + " cases reproduced" +
              (think_case ? "" : ", \"I think it is positive\" case missing or wrong")};
}

void write_dataset(const fs::path& path, const TaskSpec& task, std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed);
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    nlohmann::json row = {{"id", task.key() + "-" + std::to_string(i)},
                          {"text", "example " + std::to_string(i) + " #" + std::to_string(rng.next_u64() % 100000)},
                          {"label", task.labels()[rng.below(2)]}};
    text += row.dump() + "\n";
  }
  spit(path, text);
}

std::map<fs::path, std::string> csv_snapshot(const fs::path& root) {
  std::map<fs::path, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") out[fs::relative(e.path(), root)] = slurp(e.path());
  }
  return out;
}

// 7. full simulator run, then a replay from the populated cache
Verdict end_to_end(const fs::path& work) {
  const fs::path dir = work / "e2e";
  fs::remove_all(dir);
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& task : builtin_tasks()) {
    write_dataset(dir / (task.key() + ".jsonl"), task, 50, hash_bytes(task.key()));
    tasks.push_back({{"name", task.key()}, {"dataset", task.key() + ".jsonl"}});
  }
  const nlohmann::json config = {
      {"tasks", tasks},
      {"backend",
       {{"kind", "simulator"},
        {"seed", 17},
        {"behavior",
         {{"default", {{"options", {{{"text", "{gold}"}, {"logit", 1.5}}, {{"text", "{other}"}, {"logit", 0.0}}, {{"text", "unsure"}, {"logit", -1.0}}}}}},
          {"rules",
           {{{"template", "CoT"},
             {"turn", "predict"},
             {"options", {{{"text", "Observations.\n{gold}"}, {"logit", 1.0}}, {{"text", "Observations.\n{other}"}, {"logit", 0.0}}}}},
            {{"template", "CoT"},
             {"turn", "verify"},
             {"options", {{{"text", "{gold}"}, {"logit", 2.0}}, {{"text", "{other}"}, {"logit", 0.0}}}}}}}}}}},
      {"templates", {"Base", "Expert Detailed", "CoT", "CoT-verify"}},
      {"sweep", {{"temperatures", {0.0, 0.3, 0.7, 1.0, 1.2, 1.5}}, {"repeats", 9}}},
      {"stats", {{"n_samples", 16384}, {"seed", 3}, {"n_permutations", 10000}}},
      {"output_dir", "out"}};
  spit(dir / "config.json", config.dump(2));
  const std::string cfg = (dir / "config.json").string();

  const auto t0 = Clock::now();
  const int c1 = cli({"run", "--config", cfg});
  const int c2 = cli({"analyze", "--config", cfg});
  const int c3 = cli({"report", "--config", cfg});
  const double first_secs = seconds_since(t0);
  if (c1 || c2 || c3) return {false, "first pass exit codes " + std::to_string(c1) + "/" + std::to_string(c2) + "/" + std::to_string(c3)};
  const auto before = csv_snapshot(dir / "out");

  std::size_t calls = 0, cells = 0;
  std::string summary;
  const int d1 = cli({"run", "--config", cfg}, &summary);
  for (const auto& task : builtin_tasks()) {
    const auto m = nlohmann::json::parse(slurp(dir / "out" / "pools" / (task.key() + ".manifest.json")));
    calls += m.at("counts").at("backend_requests").get<std::size_t>();
    cells += m.at("counts").at("cells").get<std::size_t>();
  }
  const int d2 = cli({"analyze", "--config", cfg});
  const int d3 = cli({"report", "--config", cfg});
  const auto after = csv_snapshot(dir / "out");
  const bool identical = before == after && !before.empty();
  return {d1 == 0 && d2 == 0 && d3 == 0 && identical && calls == 0 && first_secs < 300,
          std::to_string(cells) + " cells in " + fmt("%.1f", first_secs) + " s (< 300 s), replay: " + std::to_string(calls) +
              " backend calls, " + std::to_string(after.size()) + " CSVs " + (identical ? "byte-identical" : "DIFFER")};
}

std::vector<std::vector<double>> read_curve(const fs::path& csv) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(slurp(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

// 8. fixed-margin simulator: accuracy falls and intervals widen as T rises
Verdict curve_shape(const fs::path& work) {
  const fs::path dir = work / "shape";
  fs::remove_all(dir);
  write_dataset(dir / "sentiment.jsonl", *find_builtin_task("sentiment"), 200, 8);
  const nlohmann::json config = {
      {"tasks", {{{"name", "sentiment"}, {"dataset", "sentiment.jsonl"}}}},
      {"backend",
       {{"kind", "simulator"},
        {"seed", 2},
        {"behavior", {{"default", {{"options", {{{"text", "{gold}"}, {"logit", 2.0}}, {{"text", "{other}"}, {"logit", 0.0}}}}}}}}}},
      {"templates", {"Base"}},
      {"sweep", {{"temperatures", {0.0, 0.3, 0.7, 1.0, 1.2, 1.5}}, {"repeats", 9}}},
      {"stats", {{"n_samples", 16384}, {"seed", 1}}},
      {"output_dir", "out"}};
  spit(dir / "config.json", config.dump(2));
  const std::string cfg = (dir / "config.json").string();
  if (cli({"run", "--config", cfg}) || cli({"analyze", "--config", cfg})) return {false, "run/analyze failed"};
  const auto rows = read_curve(dir / "out" / "analysis" / "sentiment" / "Base__accuracy__temperature.csv");
  if (rows.size() != 6) return {false, "curve has " + std::to_string(rows.size()) + " points, expected 6"};
  bool means_ok = true, widths_ok = true;
  std::string means = "means", widths = "widths";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    means += " " + fmt("%.4f", rows[i][1]);
    widths += " " + fmt("%.4f", rows[i][3] - rows[i][2]);
    if (i > 0) {
      means_ok = means_ok && rows[i][1] <= rows[i - 1][1];
      widths_ok = widths_ok && rows[i][3] - rows[i][2] >= rows[i - 1][3] - rows[i - 1][2];
    }
  }
  return {means_ok && widths_ok, means + (means_ok ? " (non-increasing), " : " (NOT non-increasing), ") + widths +
                                     (widths_ok ? " (non-decreasing)" : " (NOT non-decreasing)")};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "promptsense_acceptance";
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"sampling formula fidelity", sampling_fidelity},
      {"limit behaviors", limit_behaviors},
      {"template goldens", template_goldens},
      {"Monte Carlo oracle", monte_carlo_oracle},
      {"permutation test oracle", permutation_oracle},
      {"parser fixtures", parser_fixtures},
      {"end-to-end determinism", [&] { return end_to_end(work); }},
      {"T-sensitivity curve shape", [&] { return curve_shape(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
