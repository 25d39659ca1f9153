#pragma once
// Line-aligned parallel corpora: loading, deterministic splitting, and a
// synthetic generator that injects known machine-side artifacts.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamat/common.hpp"
#include "diamat/embed.hpp"

namespace diamat {

enum class Origin : std::uint8_t { real, synthetic };

enum class ArtifactKind : std::uint8_t { unreduce_negation, merge_sentences, append_end_marker };

inline std::string_view to_string(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::unreduce_negation: return "unreduce_negation";
    case ArtifactKind::merge_sentences: return "merge_sentences";
    case ArtifactKind::append_end_marker: return "append_end_marker";
  }
  return "?";
}

inline ArtifactKind parse_artifact_kind(std::string_view s) {
  if (s == "unreduce_negation") return ArtifactKind::unreduce_negation;
  if (s == "merge_sentences") return ArtifactKind::merge_sentences;
  if (s == "append_end_marker") return ArtifactKind::append_end_marker;
  throw ConfigError("unknown artifact kind '" + std::string(s) + "'");
}

struct ParallelSample {
  std::int64_t id = 0;
  std::string source;
  std::string human_translation;
  std::string machine_translation;
  Origin origin = Origin::real;
  std::set<ArtifactKind> injected_artifacts;

  bool operator==(const ParallelSample&) const = default;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.1;
  double pattern_fraction = 0.05;
  double test_fraction = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    const std::array f{train_fraction, validation_fraction, pattern_fraction, test_fraction};
    for (double v : f)
      if (!(v >= 0.0)) throw ConfigError("split fractions must be non-negative");
    if (std::abs(f[0] + f[1] + f[2] + f[3] - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  }
};

struct Splits {
  std::vector<ParallelSample> train, validation, pattern, test;
};

struct ArtifactSpec {
  ArtifactKind kind = ArtifactKind::unreduce_negation;
  double probability = 1.0;
  std::uint64_t seed = 0;
};

struct LoadResult {
  std::vector<ParallelSample> samples;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read corpus file " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace detail

inline LoadResult load_corpus(const std::string& source_path, const std::string& human_path,
                              const std::string& machine_path) {
  const auto src = detail::read_lines(source_path);
  const auto hum = detail::read_lines(human_path);
  const auto mac = detail::read_lines(machine_path);
  if (src.size() != hum.size() || src.size() != mac.size())
    throw DataError("line-count mismatch " + std::to_string(src.size()) + "/" + std::to_string(hum.size()) + "/" +
                    std::to_string(mac.size()));
  LoadResult r;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto s = detail::trim(src[i]);
    const auto h = detail::trim(hum[i]);
    const auto m = detail::trim(mac[i]);
    if (s.empty() || h.empty() || m.empty()) {
      ++r.skipped;
      continue;
    }
    r.samples.push_back({static_cast<std::int64_t>(i), std::string(s), std::string(h), std::string(m), Origin::real, {}});
  }
  return r;
}

// Shuffles with the spec's seed and cuts test, pattern and validation
// blocks of floor(fraction * N); everything left goes to train. Each split
// keeps input order.
inline Splits split_corpus(const std::vector<ParallelSample>& samples, const SplitSpec& spec) {
  spec.validate();
  const std::size_t n = samples.size();
  auto size_of = [n](double fraction) {
    // The small offset keeps e.g. 0.29 * 100 from flooring to 28.
    return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  };
  const std::size_t n_test = size_of(spec.test_fraction);
  const std::size_t n_pattern = size_of(spec.pattern_fraction);
  const std::size_t n_valid = size_of(spec.validation_fraction);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(spec.seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

  std::vector<int> which(n, 0);  // 0 train, 1 valid, 2 pattern, 3 test
  std::size_t pos = 0;
  for (std::size_t k = 0; k < n_test; ++k) which[order[pos++]] = 3;
  for (std::size_t k = 0; k < n_pattern; ++k) which[order[pos++]] = 2;
  for (std::size_t k = 0; k < n_valid; ++k) which[order[pos++]] = 1;

  Splits out;
  for (std::size_t i = 0; i < n; ++i) {
    switch (which[i]) {
      case 0: out.train.push_back(samples[i]); break;
      case 1: out.validation.push_back(samples[i]); break;
      case 2: out.pattern.push_back(samples[i]); break;
      default: out.test.push_back(samples[i]); break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Artifact rewrites. Texts are whitespace-tokenized ("I ca n't go .").

namespace artifacts {

inline std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

inline bool is_end_marker(std::string_view tok) { return tok == "." || tok == "!" || tok == "?"; }

inline bool ends_with_marker(std::string_view text) {
  text = detail::trim(text);
  return !text.empty() && (text.back() == '.' || text.back() == '!' || text.back() == '?');
}

inline bool has_negation_site(const std::vector<std::string>& tokens) {
  return std::find(tokens.begin(), tokens.end(), "n't") != tokens.end();
}

// "n't" -> "not", repairing the host verb where the reduced form differs.
inline std::vector<std::string> unreduce_negation(std::vector<std::string> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] != "n't") continue;
    tokens[i] = "not";
    if (i > 0) {
      auto& host = tokens[i - 1];
      if (host == "ca") host = "can";
      else if (host == "wo") host = "will";
      else if (host == "Ca") host = "Can";
      else if (host == "Wo") host = "Will";
    }
  }
  return tokens;
}

// Internal sentence boundary: a "." token followed by a capitalized token.
inline bool is_boundary(const std::vector<std::string>& tokens, std::size_t i) {
  return tokens[i] == "." && i + 1 < tokens.size() && !tokens[i + 1].empty() &&
         std::isupper(static_cast<unsigned char>(tokens[i + 1][0]));
}

inline bool has_merge_site(const std::vector<std::string>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (is_boundary(tokens, i)) return true;
  return false;
}

// Every internal ". X" becomes ", x".
inline std::vector<std::string> merge_sentences(std::vector<std::string> tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!is_boundary(tokens, i)) continue;
    tokens[i] = ",";
    auto& next = tokens[i + 1];
    next[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(next[0])));
  }
  return tokens;
}

inline bool has_end_marker_site(std::string_view source, const std::vector<std::string>& tokens) {
  return !ends_with_marker(source) && !tokens.empty() && !is_end_marker(tokens.back());
}

}  // namespace artifacts

// Machine side = human side with each artifact fired independently. An
// artifact only consumes a random draw on samples where it has a site, so
// its firing rate among site-bearing samples equals its probability.
inline std::vector<ParallelSample> synthesize_machine_corpus(const std::vector<ParallelSample>& base,
                                                             const std::vector<ArtifactSpec>& specs) {
  for (const auto& s : specs)
    if (!(s.probability >= 0.0 && s.probability <= 1.0)) throw ConfigError("artifact probability outside [0,1]");
  std::vector<Rng> rngs;
  for (const auto& s : specs) rngs.emplace_back(s.seed);

  std::vector<ParallelSample> out;
  out.reserve(base.size());
  for (const auto& sample : base) {
    ParallelSample s = sample;
    s.origin = Origin::synthetic;
    s.injected_artifacts.clear();
    auto tokens = tokenize(s.human_translation);
    for (std::size_t a = 0; a < specs.size(); ++a) {
      const auto& spec = specs[a];
      bool site = false;
      switch (spec.kind) {
        case ArtifactKind::unreduce_negation: site = artifacts::has_negation_site(tokens); break;
        case ArtifactKind::merge_sentences: site = artifacts::has_merge_site(tokens); break;
        case ArtifactKind::append_end_marker: site = artifacts::has_end_marker_site(s.source, tokens); break;
      }
      if (!site || uniform_unit(rngs[a]) >= spec.probability) continue;
      switch (spec.kind) {
        case ArtifactKind::unreduce_negation: tokens = artifacts::unreduce_negation(std::move(tokens)); break;
        case ArtifactKind::merge_sentences: tokens = artifacts::merge_sentences(std::move(tokens)); break;
        case ArtifactKind::append_end_marker: tokens.emplace_back("."); break;
      }
      s.injected_artifacts.insert(spec.kind);
    }
    s.machine_translation = s.injected_artifacts.empty() ? s.human_translation : artifacts::join(tokens);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic base corpus: a small bilingual template grammar. Every human
// translation carries a reduced negation; most have several sentences; a
// share of sources (and their translations) lack a final end marker.

struct BaseCorpusOptions {
  std::size_t samples = 1000;
  std::uint64_t seed = 1;
  double multi_sentence_probability = 0.9;
  double missing_end_marker_probability = 0.7;
};

namespace detail {

struct Phrase {
  std::string_view target;
  std::string_view source;
};

inline constexpr Phrase kSubjects[] = {
    {"I", "ich"},           {"She", "sie"},          {"He", "er"},
    {"We", "wir"},          {"They", "sie_pl"},      {"The driver", "der Fahrer"},
    {"My sister", "meine Schwester"}, {"The committee", "der Ausschuss"},
    {"Our neighbour", "unser Nachbar"}, {"The teacher", "die Lehrerin"},
    {"The minister", "der Minister"}, {"His father", "sein Vater"},
};

inline constexpr Phrase kNegatedAux[] = {
    {"ca n't", "kann nicht"},   {"do n't", "tun nicht"},     {"does n't", "tut nicht"},
    {"did n't", "tat nicht"},   {"wo n't", "wird nicht"},    {"could n't", "konnte nicht"},
    {"should n't", "sollte nicht"}, {"would n't", "wuerde nicht"},
};

inline constexpr Phrase kVerbs[] = {
    {"go", "gehen"},      {"stay", "bleiben"},   {"wait", "warten"},     {"pay", "zahlen"},
    {"answer", "antworten"}, {"sleep", "schlafen"}, {"decide", "entscheiden"}, {"leave", "abfahren"},
    {"help", "helfen"},   {"agree", "zustimmen"}, {"explain", "erklaeren"}, {"travel", "reisen"},
};

inline constexpr Phrase kPastVerbs[] = {
    {"went", "ging"},        {"stayed", "blieb"},     {"waited", "wartete"}, {"paid", "zahlte"},
    {"answered", "antwortete"}, {"slept", "schlief"}, {"decided", "entschied"}, {"left", "fuhr_ab"},
    {"helped", "half"},      {"agreed", "stimmte_zu"}, {"explained", "erklaerte"}, {"travelled", "reiste"},
};

inline constexpr Phrase kComplements[] = {
    {"today", "heute"},           {"at home", "zu Hause"},        {"in the city", "in der Stadt"},
    {"this week", "diese Woche"}, {"for the meeting", "fuer das Treffen"},
    {"without help", "ohne Hilfe"}, {"before noon", "vor Mittag"}, {"after the vote", "nach der Abstimmung"},
    {"on Monday", "am Montag"},   {"with the family", "mit der Familie"},
};

template <std::size_t N>
const Phrase& pick(Rng& rng, const Phrase (&table)[N]) {
  return table[uniform_index(rng, N)];
}

}  // namespace detail

inline std::vector<ParallelSample> generate_base_corpus(const BaseCorpusOptions& opt) {
  using detail::pick;
  Rng rng(opt.seed);
  std::vector<ParallelSample> out;
  out.reserve(opt.samples);
  for (std::size_t i = 0; i < opt.samples; ++i) {
    std::size_t sentences = 1;
    if (uniform_unit(rng) < opt.multi_sentence_probability) sentences += 1 + uniform_index(rng, 2);
    const std::size_t negated = uniform_index(rng, sentences);
    const bool marker = uniform_unit(rng) >= opt.missing_end_marker_probability;

    std::string tgt;
    std::string src;
    for (std::size_t k = 0; k < sentences; ++k) {
      const auto& subj = pick(rng, detail::kSubjects);
      const auto& comp = pick(rng, detail::kComplements);
      std::string t(subj.target);
      std::string s(subj.source);
      if (k == negated) {
        const auto& aux = pick(rng, detail::kNegatedAux);
        const auto& verb = pick(rng, detail::kVerbs);
        t += ' ' + std::string(aux.target) + ' ' + std::string(verb.target);
        s += ' ' + std::string(aux.source) + ' ' + std::string(verb.source);
      } else {
        const auto& verb = pick(rng, detail::kPastVerbs);
        t += ' ' + std::string(verb.target);
        s += ' ' + std::string(verb.source);
      }
      t += ' ' + std::string(comp.target);
      s += ' ' + std::string(comp.source);
      if (k + 1 < sentences) {
        t += " . ";
        s += " . ";
      }
      tgt += t;
      src += s;
    }
    if (marker) {
      tgt += " .";
      src += " .";
    }
    // Source lexicon is lowercase; capitalize sentence starts.
    if (!src.empty()) src[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(src[0])));
    for (std::size_t p = src.find(" . "); p != std::string::npos; p = src.find(" . ", p + 3))
      if (p + 3 < src.size()) src[p + 3] = static_cast<char>(std::toupper(static_cast<unsigned char>(src[p + 3])));

    out.push_back({static_cast<std::int64_t>(i), std::move(src), tgt, tgt, Origin::synthetic, {}});
  }
  return out;
}

// Random vectors for every token that occurs in the corpus, in first-seen order.
inline VectorTable synthesize_vectors(const std::vector<ParallelSample>& samples, std::size_t dim,
                                      std::uint64_t seed) {
  VectorTable table;
  table.dimension = dim;
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  auto add = [&](const std::string& text) {
    for (auto& tok : tokenize(text)) {
      if (table.find(tok)) continue;
      std::vector<double> v(dim);
      for (double& x : v) x = scale * standard_normal(rng);
      table.insert(std::move(tok), std::move(v));
    }
  };
  for (const auto& s : samples) {
    add(s.source);
    add(s.human_translation);
    add(s.machine_translation);
  }
  return table;
}

// ---------------------------------------------------------------------------
// JSON lines manifest.

inline nlohmann::json to_json(const ParallelSample& s) {
  nlohmann::json arts = nlohmann::json::array();
  for (auto k : s.injected_artifacts) arts.push_back(std::string(to_string(k)));
  return {{"id", s.id},
          {"source", s.source},
          {"human_translation", s.human_translation},
          {"machine_translation", s.machine_translation},
          {"origin", s.origin == Origin::real ? "real" : "synthetic"},
          {"injected_artifacts", std::move(arts)}};
}

inline ParallelSample sample_from_json(const nlohmann::json& j) {
  ParallelSample s;
  s.id = j.at("id").get<std::int64_t>();
  s.source = j.at("source").get<std::string>();
  s.human_translation = j.at("human_translation").get<std::string>();
  s.machine_translation = j.at("machine_translation").get<std::string>();
  const auto origin = j.at("origin").get<std::string>();
  if (origin != "real" && origin != "synthetic") throw DataError("unknown origin '" + origin + "'");
  s.origin = origin == "real" ? Origin::real : Origin::synthetic;
  for (const auto& a : j.at("injected_artifacts")) s.injected_artifacts.insert(parse_artifact_kind(a.get<std::string>()));
  if (s.origin == Origin::real && !s.injected_artifacts.empty())
    throw DataError("sample " + std::to_string(s.id) + ": real sample with injected artifacts");
  return s;
}

inline void write_manifest(const std::string& path, const std::vector<ParallelSample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

inline std::vector<ParallelSample> read_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read manifest " + path);
  std::vector<ParallelSample> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace diamat
