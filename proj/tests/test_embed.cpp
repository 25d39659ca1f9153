#include <catch_amalgamated.hpp>

#include <sstream>

#include "diamat/embed.hpp"
#include "support.hpp"

using namespace diamat;

namespace {

VectorTable parse(const std::string& text) {
  std::istringstream in(text);
  return parse_vectors(in);
}

std::string join_spaces(const std::vector<std::string>& tokens) {
  std::string s;
  for (const auto& t : tokens) s += (s.empty() ? "" : " ") + t;
  return s;
}

}  // namespace

TEST_CASE("vector file with two entries", "[embed]") {
  const auto t = parse("2 3\na 1 0 0\nb 0 1 0");
  CHECK(t.dimension == 3);
  CHECK(t.token_count() == 2);
  REQUIRE(t.find("a"));
  CHECK(*t.find("a") == std::vector<double>{1, 0, 0});
  CHECK(*t.find("b") == std::vector<double>{0, 1, 0});
  CHECK(t.find("c") == nullptr);
}

TEST_CASE("vector file with header only", "[embed]") {
  const auto t = parse("0 300\n");
  CHECK(t.dimension == 300);
  CHECK(t.token_count() == 0);
}

TEST_CASE("short vector line is skipped and counted", "[embed]") {
  const auto t = parse("2 3\na 1 0 0\nc 1 2\n");
  CHECK(t.token_count() == 1);
  CHECK(t.skipped_lines == 1);
}

TEST_CASE("duplicate tokens keep the first vector", "[embed]") {
  const auto t = parse("2 2\na 1 2\na 3 4\n");
  CHECK(t.token_count() == 1);
  CHECK(*t.find("a") == std::vector<double>{1, 2});
}

TEST_CASE("malformed vector header is fatal", "[embed]") {
  CHECK_THROWS_AS(parse("hello\na 1\n"), DataError);
  CHECK_THROWS_AS(parse("3\n"), DataError);
  CHECK_THROWS_AS(parse("1 x\n"), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
  CHECK_THROWS_AS(parse_vector_file("/nonexistent/file.vec"), DataError);
}

TEST_CASE("vector table survives a write/parse round trip", "[embed]") {
  const auto t = parse("3 2\nx 0.1 -2.5e-3\ny 1e10 3\nz 0.30000000000000004 7\n");
  std::ostringstream out;
  write_vectors(out, t);
  const auto back = parse(out.str());
  CHECK(back.entries == t.entries);
  CHECK(back.order == t.order);
}

TEST_CASE("tokenizer examples", "[embed]") {
  CHECK(tokenize("").empty());
  CHECK(tokenize("doesn't work.") == std::vector<std::string>{"does", "n't", "work", "."});
  CHECK(tokenize("Hello, world") == std::vector<std::string>{"Hello", ",", "world"});
  CHECK(tokenize("I can't go.") == std::vector<std::string>{"I", "ca", "n't", "go", "."});
  CHECK(tokenize("(We're) \"sure\"!") ==
        std::vector<std::string>{"(", "We", "'re", ")", "\"", "sure", "\"", "!"});
  CHECK(tokenize("John's car, I'd say; they'll, you've: I'm") ==
        std::vector<std::string>{"John", "'s", "car", ",", "I", "'d", "say", ";", "they", "'ll", ",",
                                 "you", "'ve", ":", "I", "'m"});
  CHECK(tokenize("  spaced \t out  ") == std::vector<std::string>{"spaced", "out"});
  CHECK(tokenize("CASE Kept") == std::vector<std::string>{"CASE", "Kept"});
}

TEST_CASE("tokenizer is idempotent on its own joined output", "[embed]") {
  const std::vector<std::string> texts{
      "doesn't work.", "Hello, world", "She said: \"I won't!\" (twice).", "They're here; we've gone.",
      "I can't go . The car is n't here", "a.b, c!? d", "'quoted' words", "n't 's 're", "Mr. Smith's (old) car."};
  for (const auto& text : texts) {
    const auto once = tokenize(text);
    CHECK(tokenize(join_spaces(once)) == once);
  }
  Rng rng(5);
  const std::string alphabet = "ab .,!?;:\"()'nt";
  for (int i = 0; i < 500; ++i) {
    std::string s;
    const auto n = uniform_index(rng, 30);
    for (std::uint64_t k = 0; k < n; ++k) s += alphabet[uniform_index(rng, alphabet.size())];
    const auto once = tokenize(s);
    INFO(s);
    CHECK(tokenize(join_spaces(once)) == once);
  }
}

TEST_CASE("embedding lookup, OOV and truncation", "[embed]") {
  const auto t = parse("1 3\na 1 0 0\n");
  const auto m = embed_sentence({"a"}, t, 2);
  CHECK(m.valid_length == 1);
  CHECK(m.values.rows() == 2);
  CHECK(m.values.row(0)[0] == 1.0);
  for (double v : m.values.row(1)) CHECK(v == 0.0);

  const auto oov = embed_sentence({"zzz"}, t, 2);
  CHECK(oov.valid_length == 1);
  for (double v : oov.values.values()) CHECK(v == 0.0);

  std::vector<std::string> many(100, "a");
  const auto cut = embed_sentence(many, t, 60);
  CHECK(cut.valid_length == 60);
  CHECK(cut.tokens.size() == 60);
  for (std::size_t i = 0; i < 60; ++i) CHECK(cut.values.row(i)[0] == 1.0);

  CHECK_THROWS_AS(embed_sentence({"a"}, t, 0), ConfigError);
}

TEST_CASE("embedding round trip and padding purity", "[embed]") {
  Rng rng(11);
  VectorTable t;
  t.dimension = 5;
  std::vector<std::string> vocab;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(5);
    for (double& x : v) x = standard_normal(rng);
    vocab.push_back("w" + std::to_string(i));
    t.insert(vocab.back(), v);
  }
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::string> tokens;
    const auto n = uniform_index(rng, 15);
    for (std::uint64_t k = 0; k < n; ++k) tokens.push_back(vocab[uniform_index(rng, vocab.size())]);
    const auto m = embed_sentence(tokens, t, 10);
    REQUIRE(m.valid_length == std::min<std::size_t>(n, 10));
    for (std::size_t i = 0; i < m.valid_length; ++i) {
      const auto row = m.values.row(i);
      CHECK(std::vector<double>(row.begin(), row.end()) == *t.find(tokens[i]));
    }
    for (std::size_t i = m.valid_length; i < 10; ++i)
      for (double v : m.values.row(i)) CHECK(v == 0.0);
  }
}
