#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"
#include "promptsense/orchestrator.hpp"

namespace promptsense {

using nlohmann::json;

std::string pools_to_jsonl(const PoolSet& pools) {
  std::string out;
  for (const auto& [key, pool] : pools) {
    for (std::size_t i = 0; i < pool.example_ids.size(); ++i) {
      for (const auto& entry : pool.entries[i]) {
        json row = {{"example_id", pool.example_ids[i]},
                    {"template", key.template_name},
                    {"temperature", key.point.temperature},
                    {"top_p", key.point.top_p},
                    {"repeat", entry.repeat},
                    {"raw", entry.raw},
                    {"parsed", entry.outcome.is_parsed() ? json(entry.outcome.label()) : json(nullptr)}};
        out += row.dump();
        out += '\n';
      }
    }
  }
  return out;
}

PoolSet pools_from_jsonl(std::string_view text) {
  PoolSet pools;
  // Example position within each pool, so rows can arrive in any order.
  std::map<PoolKey, std::map<std::string, std::size_t>> positions;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json row = json::parse(line);
      PoolKey key{row.at("template").get<std::string>(),
                  {row.at("temperature").get<double>(), row.at("top_p").get<double>()}};
      const auto id = row.at("example_id").get<std::string>();
      PoolEntry entry;
      entry.repeat = row.at("repeat").get<int>();
      entry.raw = row.at("raw").get<std::string>();
      const auto& parsed = row.at("parsed");
      entry.outcome = parsed.is_null() ? ParseOutcome::unparsed(entry.raw)
                                       : ParseOutcome::parsed(parsed.get<std::string>());

      auto& pool = pools[key];
      auto& index = positions[key];
      auto [it, inserted] = index.emplace(id, pool.example_ids.size());
      if (inserted) {
        pool.example_ids.push_back(id);
        pool.entries.emplace_back();
      }
      pool.entries[it->second].push_back(std::move(entry));
    } catch (const json::exception& e) {
      throw FormatError("pools line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  for (auto& [key, pool] : pools) {
    std::size_t max_repeats = 0;
    for (auto& row : pool.entries) {
      std::stable_sort(row.begin(), row.end(), [](const PoolEntry& a, const PoolEntry& b) { return a.repeat < b.repeat; });
      max_repeats = std::max(max_repeats, row.empty() ? 0 : static_cast<std::size_t>(row.back().repeat) + 1);
    }
    pool.repeats = max_repeats;
  }
  return pools;
}

void write_pools(const std::filesystem::path& path, const PoolSet& pools) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write pools file '" + path.string() + "'");
  out << pools_to_jsonl(pools);
}

PoolSet read_pools(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open pools file '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return pools_from_jsonl(buffer.str());
}

}  // namespace promptsense
