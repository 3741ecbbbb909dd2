#include "promptsense/simulator.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"
#include "promptsense/random.hpp"
#include "promptsense/sampling.hpp"

namespace promptsense {

using nlohmann::json;

bool BehaviorRule::matches(const CallContext& context, int repeat_index) const {
  if (task && *task != context.task) return false;
  if (template_name && *template_name != context.template_name) return false;
  if (example_id && *example_id != context.example_id) return false;
  if (turn && *turn != context.turn) return false;
  if (repeat && *repeat != repeat_index) return false;
  return true;
}

int BehaviorRule::specificity() const noexcept {
  return int(task.has_value()) + int(template_name.has_value()) + int(example_id.has_value()) +
         int(turn.has_value()) + int(repeat.has_value());
}

namespace {

std::vector<ResponseOption> options_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("behavior options must be a non-empty array");
  std::vector<ResponseOption> out;
  for (const auto& o : j) {
    out.push_back({o.at("text").get<std::string>(), o.value("logit", 0.0)});
  }
  return out;
}

template <typename T>
std::optional<T> optional_field(const json& j, const char* name) {
  if (!j.contains(name) || j[name].is_null()) return std::nullopt;
  return j[name].get<T>();
}

std::string fill_reply(const std::string& text, const CallContext& context) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string::npos) break;
    const auto close = text.find('}', open);
    if (close == std::string::npos) break;
    out.append(text, pos, open - pos);
    const std::string name = text.substr(open + 1, close - open - 1);
    if (name == "gold" || name == "other") {
      if (!context.gold) throw ConfigError("simulated reply uses {" + name + "} but the call has no gold label");
      const bool gold_is_first = *context.gold == context.labels[0];
      out += name == "gold" ? *context.gold : context.labels[gold_is_first ? 1 : 0];
    } else if (name == "label0") {
      out += context.labels[0];
    } else if (name == "label1") {
      out += context.labels[1];
    } else {
      out.append(text, open, close - open + 1);
    }
    pos = close + 1;
  }
  out.append(text, pos);
  return out;
}

}  // namespace

BehaviorTable BehaviorTable::from_json(std::string_view json_text) {
  BehaviorTable table;
  try {
    const json doc = json::parse(json_text);
    if (doc.contains("default") && !doc["default"].is_null()) {
      table.set_default(options_from_json(doc["default"].at("options")));
    }
    for (const auto& r : doc.value("rules", json::array())) {
      BehaviorRule rule;
      rule.task = optional_field<std::string>(r, "task");
      rule.template_name = optional_field<std::string>(r, "template");
      rule.example_id = optional_field<std::string>(r, "example_id");
      rule.turn = optional_field<std::string>(r, "turn");
      rule.repeat = optional_field<int>(r, "repeat");
      rule.options = options_from_json(r.at("options"));
      table.add_rule(std::move(rule));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed simulator behavior: ") + e.what());
  }
  return table;
}

BehaviorTable BehaviorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open simulator behavior file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

BehaviorTable BehaviorTable::fixed_margin(double margin) {
  BehaviorTable table;
  table.set_default({{"{gold}", margin}, {"{other}", 0.0}});
  return table;
}

void BehaviorTable::add_rule(BehaviorRule rule) {
  if (rule.options.empty()) throw ConfigError("behavior rule without options");
  rules_.push_back(std::move(rule));
}

void BehaviorTable::set_default(std::vector<ResponseOption> options) {
  if (options.empty()) throw ConfigError("default behavior without options");
  default_ = std::move(options);
}

const std::vector<ResponseOption>* BehaviorTable::lookup(const CallContext& context, int repeat_index) const {
  const BehaviorRule* best = nullptr;
  for (const auto& rule : rules_) {
    if (rule.matches(context, repeat_index) && (!best || rule.specificity() > best->specificity())) best = &rule;
  }
  if (best) return &best->options;
  return default_ ? &*default_ : nullptr;
}

SimulatedChatModel::SimulatedChatModel(BehaviorTable behavior, std::uint64_t master_seed, std::string id)
    : behavior_(std::move(behavior)), master_seed_(master_seed), id_(std::move(id)) {}

std::string SimulatedChatModel::complete(const ChatRequest& request) { return simulate_completion(*this, request); }

std::string simulate_completion(const SimulatedChatModel& model, const ChatRequest& request) {
  const auto& ctx = request.context;
  const auto* options = model.behavior().lookup(ctx, request.config.repeat_index);
  if (!options) {
    throw ConfigError("simulator has no behavior for task '" + ctx.task + "', template '" + ctx.template_name +
                      "', example '" + ctx.example_id + "', repeat " + std::to_string(request.config.repeat_index));
  }

  std::vector<double> logits;
  logits.reserve(options->size());
  for (const auto& o : *options) logits.push_back(o.logit);
  const TokenDistribution dist =
      shape_distribution(LogitVector(std::move(logits)), {request.config.temperature, request.config.top_p});

  std::uint64_t message_hash = 0;
  for (const auto& m : request.messages) {
    message_hash = mix64(message_hash ^ hash_bytes(to_string(m.role)) ^ mix64(hash_bytes(m.content)));
  }
  RandomStream rng(derive_seed(model.master_seed(),
                               {request.config.seed, hash_bytes(request.config.model_id),
                                static_cast<std::uint64_t>(request.config.repeat_index), message_hash}));
  return fill_reply((*options)[sample_token(dist, rng)].text, ctx);
}

}  // namespace promptsense
