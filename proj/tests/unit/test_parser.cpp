#include <doctest.h>

#include <nlohmann/json.hpp>

#include "promptsense/error.hpp"
#include "promptsense/parser.hpp"
#include "promptsense/random.hpp"
#include "promptsense/unicode.hpp"
#include "support.hpp"

using namespace promptsense;

TEST_CASE("fixture cases") {
  const auto cases = nlohmann::json::parse(testsupport::slurp(testsupport::fixture("parser_cases.json")));
  REQUIRE(cases.size() == 40);
  for (const auto& c : cases) {
    const auto task = *find_builtin_task(c.at("task").get<std::string>());
    ParserConfig config;
    config.last_line_mode = c.value("last_line_mode", false);
    const auto raw = c.at("raw").get<std::string>();
    const auto expected = c.at("expect").is_null() ? ParseOutcome::unparsed(raw)
                                                   : ParseOutcome::parsed(c.at("expect").get<std::string>());
    CAPTURE(raw);
    CHECK(parse_label(raw, task, config) == expected);
  }
}

TEST_CASE("normalize_response examples") {
  ParserConfig config;
  CHECK(normalize_response("Label: Positive.", config) == "positive");
  CHECK(normalize_response("  NEGATIVE \n", config) == "negative");
  config.last_line_mode = true;
  CHECK(normalize_response("…analysis…\nreasoning line\nnon-toxic", config) == "nontoxic");
  CHECK(normalize_response("\n\n", config).empty());
}

TEST_CASE("labels reparse to themselves") {
  const ParserConfig config;
  for (const auto& task : builtin_tasks()) {
    for (const auto& label : task.labels()) {
      CHECK(parse_label(label, task, config) == ParseOutcome::parsed(label));
      std::string upper = label;
      for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
      CHECK(parse_label(upper + ".", task, config) == ParseOutcome::parsed(label));
    }
  }
}

TEST_CASE("parser never throws on arbitrary bytes") {
  const auto task = *find_builtin_task("toxicity");
  RandomStream rng(3);
  for (int i = 0; i < 5000; ++i) {
    std::string raw(rng.below(24), '\0');
    for (auto& ch : raw) ch = static_cast<char>(rng.below(256));
    ParserConfig config;
    config.last_line_mode = (i % 2) == 0;
    CHECK_NOTHROW(parse_label(raw, task, config));
  }
}

TEST_CASE("parser config validation") {
  ParserConfig config;
  CHECK_NOTHROW(config.validate());
  config.prefixes = {};
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.prefixes = {"Label:"};
  CHECK_THROWS_AS(config.validate(), InvalidInputError);
  config.prefixes = {"verdict:"};
  CHECK(normalize_response("Verdict: Toxic", config) == "toxic");
  CHECK(normalize_response("Label: Toxic", config) == "label toxic");
}

TEST_CASE("unicode helpers") {
  using namespace promptsense::unicode;
  CHECK(is_punctuation(U'.'));
  CHECK(is_punctuation(U'-'));
  CHECK(is_punctuation(U'_'));
  CHECK(is_punctuation(U'\u2014'));
  CHECK(is_punctuation(U'¿'));
  CHECK(is_punctuation(U'。'));
  CHECK_FALSE(is_punctuation(U'a'));
  CHECK_FALSE(is_punctuation(U'$'));  // symbol, not punctuation
  CHECK_FALSE(is_punctuation(U'+'));
  CHECK_FALSE(is_punctuation(U'é'));
  CHECK(strip_punctuation("¡hola, mundo!") == "hola mundo");
  CHECK(strip_punctuation("a\xff-b") == "a\xff" "b");
  CHECK(ascii_lower("ÀBC") == "Àbc");
  CHECK(collapse_whitespace("  a \t\n b  ") == "a b");
  CHECK(collapse_whitespace("   ").empty());
}
