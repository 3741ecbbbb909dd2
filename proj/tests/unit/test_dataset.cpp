#include <doctest.h>

#include "promptsense/dataset.hpp"
#include "promptsense/error.hpp"
#include "support.hpp"

using namespace promptsense;

TEST_CASE("valid jsonl in file order") {
  const auto task = *find_builtin_task("sentiment");
  const auto ex = parse_dataset(
      "{\"id\": \"a\", \"text\": \"good\", \"label\": \"positive\"}\n"
      "\n"
      "{\"id\": 7, \"text\": \"bad\", \"label\": \"Negative\"}\n"
      "{\"id\": \"c\", \"text\": \"fine\", \"label\": \"POSITIVE.\"}",
      task);
  REQUIRE(ex.size() == 3);
  CHECK(ex[0].id == "a");
  CHECK(ex[1].id == "7");
  CHECK(ex[1].gold == "negative");
  CHECK(ex[2].gold == "positive");
  CHECK(ex[2].text == "fine");

  const auto tox = *find_builtin_task("toxicity");
  CHECK(parse_dataset(R"({"id": "x", "text": "t", "label": "nontoxic"})", tox)[0].gold == "non-toxic");
}

TEST_CASE("dataset errors") {
  const auto task = *find_builtin_task("sentiment");
  try {
    parse_dataset("{\"id\": \"a\", \"text\": \"t\", \"label\": \"positive\"}\n{\"id\": \"b\", \"text\": \"t\"}", task);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    CHECK(std::string(e.what()).find("label") != std::string::npos);
  }
  try {
    parse_dataset(R"({"id": "a", "text": "t", "label": "neutral"})", task);
    FAIL("expected LabelError");
  } catch (const LabelError& e) {
    CHECK(std::string(e.what()).find("neutral") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_dataset("{\"id\": \"a\", \"text\": \"t\", \"label\": \"positive\"}\n"
                                "{\"id\": \"a\", \"text\": \"u\", \"label\": \"negative\"}",
                                task),
                  FormatError);
  CHECK_THROWS_AS(parse_dataset("not json", task), FormatError);
  CHECK_THROWS_AS(parse_dataset(R"({"id": "a", "text": 3, "label": "positive"})", task), FormatError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/data.jsonl", task), NotFoundError);
}

TEST_CASE("load from disk") {
  const auto dir = testsupport::scratch_dir("dataset");
  testsupport::spit(dir / "d.jsonl", "{\"id\": \"a\", \"text\": \"good\", \"label\": \"positive\"}\n");
  CHECK(load_dataset(dir / "d.jsonl", *find_builtin_task("sentiment")).size() == 1);
}
