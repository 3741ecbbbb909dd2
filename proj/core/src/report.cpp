#include "promptsense/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "promptsense/error.hpp"
#include "promptsense/random.hpp"

namespace promptsense {

std::string_view to_string(SweepAxis axis) { return axis == SweepAxis::top_p ? "top_p" : "temperature"; }

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  std::string out = buf;
  // Avoid "-0.000000".
  if (out.find_first_not_of("-0.") == std::string::npos && out.front() == '-') out.erase(0, 1);
  return out;
}

namespace {

const PredictionPool& find_pool(const TaskPools& data, const std::string& template_name, const SweepPoint& point) {
  auto it = data.pools.find(PoolKey{template_name, point});
  if (it == data.pools.end()) {
    throw ShapeError("no pool for task '" + data.task.key() + "', template '" + template_name + "' at T=" +
                     format_fixed(point.temperature, 2) + ", top_p=" + format_fixed(point.top_p, 2));
  }
  return it->second;
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

SensitivityCurve build_curve(const TaskPools& data, const std::string& template_name, const MetricKind& kind,
                             SweepAxis axis, const AxisPoints& points, const MonteCarloConfig& config) {
  SensitivityCurve curve;
  curve.task = data.task.key();
  curve.template_name = template_name;
  curve.metric = kind.metric;
  curve.axis = axis;
  for (const auto& [param, point] : points) {
    const CodedPool coded = encode_pool(find_pool(data, template_name, point), data.examples, data.task);
    CurvePoint cp{param, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
    try {
      const auto dist = mc_distribution(coded, kind, config);
      cp = {param, dist.mean, dist.ci_lower, dist.ci_upper};
    } catch (const UndefinedMetricError&) {
    }
    curve.points.push_back(cp);
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const CurvePoint& a, const CurvePoint& b) { return a.param < b.param; });
  return curve;
}

std::string curve_to_csv(const SensitivityCurve& curve) {
  std::string out = "param,mean,ci_lower,ci_upper\n";
  for (const auto& p : curve.points) {
    out += format_fixed(p.param, 6) + "," + format_fixed(p.mean, 6) + "," + format_fixed(p.ci_lower, 6) + "," +
           format_fixed(p.ci_upper, 6) + "\n";
  }
  return out;
}

std::string curve_to_svg(const SensitivityCurve& curve) {
  constexpr double kWidth = 640, kHeight = 400;
  constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  std::vector<CurvePoint> pts;
  for (const auto& p : curve.points) {
    if (!std::isnan(p.mean)) pts.push_back(p);
  }
  double x_min = 0.0, x_max = 1.0;
  if (!curve.points.empty()) {
    x_min = curve.points.front().param;
    x_max = curve.points.back().param;
  }
  if (x_max - x_min < 1e-12) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  auto sx = [&](double x) { return kLeft + (x - x_min) / (x_max - x_min) * plot_w; };
  auto sy = [&](double y) { return kTop + (1.0 - y) * plot_h; };
  auto f2 = [](double v) { return format_fixed(v, 2); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
     << xml_escape(curve.task + " / " + curve.template_name + ": " + std::string(to_string(curve.metric))) << "</text>\n";

  // Axes and grid.
  os << "<g stroke=\"#999\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    os << "<line x1=\"" << f2(kLeft) << "\" y1=\"" << f2(sy(y)) << "\" x2=\"" << f2(kLeft + plot_w) << "\" y2=\""
       << f2(sy(y)) << "\" stroke=\"#e5e5e5\"/>\n";
    os << "<text x=\"" << f2(kLeft - 8) << "\" y=\"" << f2(sy(y) + 4) << "\" text-anchor=\"end\" stroke=\"none\">"
       << f2(y) << "</text>\n";
  }
  for (const auto& p : curve.points) {
    os << "<text x=\"" << f2(sx(p.param)) << "\" y=\"" << f2(kTop + plot_h + 18)
       << "\" text-anchor=\"middle\" stroke=\"none\">" << f2(p.param) << "</text>\n";
  }
  os << "<line x1=\"" << f2(kLeft) << "\" y1=\"" << f2(kTop) << "\" x2=\"" << f2(kLeft) << "\" y2=\""
     << f2(kTop + plot_h) << "\"/>\n";
  os << "<line x1=\"" << f2(kLeft) << "\" y1=\"" << f2(kTop + plot_h) << "\" x2=\"" << f2(kLeft + plot_w)
     << "\" y2=\"" << f2(kTop + plot_h) << "\"/>\n";
  os << "<text x=\"" << f2(kLeft + plot_w / 2) << "\" y=\"" << f2(kHeight - 10)
     << "\" text-anchor=\"middle\" stroke=\"none\">" << to_string(curve.axis) << "</text>\n";
  os << "</g>\n";

  if (!pts.empty()) {
    os << "<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (const auto& p : pts) os << f2(sx(p.param)) << "," << f2(sy(p.ci_upper)) << " ";
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) os << f2(sx(it->param)) << "," << f2(sy(it->ci_lower)) << " ";
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) os << f2(sx(p.param)) << "," << f2(sy(p.mean)) << " ";
    os << "\"/>\n";
    for (const auto& p : pts) {
      os << "<circle cx=\"" << f2(sx(p.param)) << "\" cy=\"" << f2(sy(p.mean)) << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

ResultsTable build_results_table(std::span<const TaskPools> data, std::span<const std::string> templates,
                                 const ResultsOptions& options) {
  if (std::find(templates.begin(), templates.end(), options.base_template) == templates.end()) {
    throw ConfigError("reference template '" + options.base_template + "' is not among the reported templates");
  }
  ResultsTable table;
  table.base_template = options.base_template;
  table.point = options.point;
  table.policy = options.policy;
  for (const auto& d : data) table.tasks.push_back(d.task.key());

  const MetricKind parsed_kind{Metric::parsed_rate, options.policy};
  const MetricKind acc_kind{Metric::accuracy, options.policy};
  const MetricKind uar_kind{Metric::uar, options.policy};
  auto safe = [](const MetricKind& kind, std::span<const LabelCode> preds, std::span<const LabelCode> golds) {
    try {
      return evaluate(kind, preds, golds);
    } catch (const UndefinedMetricError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  for (const auto& name : templates) {
    ResultsRow row;
    row.template_name = name;
    for (const auto& d : data) {
      const CodedPool pool = encode_pool(find_pool(d, name, options.point), d.examples, d.task);
      const auto preds = pool.repeat_column(0);
      ResultsCell cell;
      cell.parsed = safe(parsed_kind, preds, pool.golds);
      cell.accuracy = safe(acc_kind, preds, pool.golds);
      cell.uar = safe(uar_kind, preds, pool.golds);
      if (name != options.base_template) {
        const CodedPool base = encode_pool(find_pool(d, options.base_template, options.point), d.examples, d.task);
        if (base.golds != pool.golds) throw InvalidInputError("pools are not aligned on the same examples");
        const auto base_preds = base.repeat_column(0);
        auto p_value = [&](const MetricKind& kind, std::uint64_t which) -> std::optional<double> {
          const std::uint64_t seed =
              derive_seed(options.seed, {hash_bytes(d.task.key()), hash_bytes(name), which});
          return permutation_test(base_preds, preds, pool.golds, kind, options.n_permutations, seed).p_value;
        };
        cell.parsed_p = p_value(parsed_kind, 0);
        cell.accuracy_p = p_value(acc_kind, 1);
        cell.uar_p = p_value(uar_kind, 2);
      }
      row.cells.push_back(cell);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string percent(double fraction) { return format_fixed(100.0 * fraction, 1); }

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string optional_p(const std::optional<double>& p) { return p ? format_fixed(*p, 6) : ""; }

}  // namespace

std::string results_to_csv(const ResultsTable& table) {
  std::string out = "template";
  for (const auto& t : table.tasks) {
    out += "," + t + "_parsed," + t + "_acc," + t + "_uar," + t + "_parsed_p," + t + "_acc_p," + t + "_uar_p";
  }
  out += "\n";
  for (const auto& row : table.rows) {
    out += csv_field(row.template_name);
    for (const auto& c : row.cells) {
      out += "," + percent(c.parsed) + "," + percent(c.accuracy) + "," + percent(c.uar) + "," + optional_p(c.parsed_p) +
             "," + optional_p(c.accuracy_p) + "," + optional_p(c.uar_p);
    }
    out += "\n";
  }
  return out;
}

std::string results_to_markdown(const ResultsTable& table) {
  auto starred = [](double value, const std::optional<double>& p) {
    std::string s = percent(value);
    if (p) s += significance_stars(*p);
    return s;
  };
  std::string out;
  out += "Comparison point: T=" + format_fixed(table.point.temperature, 2) +
         ", top_p=" + format_fixed(table.point.top_p, 2) + "; reference: " + table.base_template +
         "; unparsed policy: " + std::string(to_string(table.policy)) + ".\n";
  out += "Markers: * p < 5%, ** p < 1% (paired two-tailed permutation test against the reference).\n\n";
  out += "| Template |";
  for (const auto& t : table.tasks) out += " " + t + " Parsed % |";
  for (const auto& t : table.tasks) out += " " + t + " ACC % |";
  for (const auto& t : table.tasks) out += " " + t + " UAR % |";
  out += "\n|---|";
  for (std::size_t i = 0; i < 3 * table.tasks.size(); ++i) out += "---:|";
  out += "\n";
  for (const auto& row : table.rows) {
    out += "| " + row.template_name + " |";
    for (const auto& c : row.cells) out += " " + starred(c.parsed, c.parsed_p) + " |";
    for (const auto& c : row.cells) out += " " + starred(c.accuracy, c.accuracy_p) + " |";
    for (const auto& c : row.cells) out += " " + starred(c.uar, c.uar_p) + " |";
    out += "\n";
  }
  return out;
}

}  // namespace promptsense
