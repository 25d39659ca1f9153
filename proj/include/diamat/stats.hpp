#pragma once
// Corpus-level contrasts between the human and machine sides: segment
// presence counts, Pearson chi-squared tests, and n-gram rankings built from
// explanation scores.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamat/common.hpp"
#include "diamat/corpus.hpp"
#include "diamat/embed.hpp"
#include "diamat/explainer.hpp"

namespace diamat {

// Rows: {human, machine}; columns: {present, absent}.
struct ContingencyTable {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  std::uint64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  double rate(std::size_t row) const {
    const auto n = counts[row][0] + counts[row][1];
    return n == 0 ? 0.0 : static_cast<double>(counts[row][0]) / static_cast<double>(n);
  }
  bool operator==(const ContingencyTable&) const = default;
};

// Upper-tail probability of the chi-squared distribution with one degree
// of freedom.
inline double chi_squared_1dof_survival(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(x / 2.0)); }

// Critical value c with P(X > c) = alpha for one degree of freedom, by
// bisection on the survival function.
inline double chi_squared_critical_value(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  double lo = 0.0;
  double hi = 1.0;
  while (chi_squared_1dof_survival(hi) > alpha) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (chi_squared_1dof_survival(mid) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct ChiSquaredResult {
  bool testable = false;
  double statistic = 0.0;
  double p_value = 1.0;
  bool significant = false;
};

// Pearson statistic with expected counts from the margins, no continuity
// correction. A zero margin makes the table untestable.
inline ChiSquaredResult chi_squared(const ContingencyTable& t, double alpha = 0.001) {
  ChiSquaredResult r;
  const double n = static_cast<double>(t.total());
  std::array<double, 2> rows{}, cols{};
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      rows[i] += static_cast<double>(t.counts[i][j]);
      cols[j] += static_cast<double>(t.counts[i][j]);
    }
  if (n == 0.0 || rows[0] == 0.0 || rows[1] == 0.0 || cols[0] == 0.0 || cols[1] == 0.0) return r;
  r.testable = true;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / n;
      const double d = static_cast<double>(t.counts[i][j]) - expected;
      r.statistic += d * d / expected;
    }
  r.p_value = chi_squared_1dof_survival(r.statistic);
  r.significant = r.statistic > chi_squared_critical_value(alpha);
  return r;
}

// ---------------------------------------------------------------------------
// Phenomena

struct PhenomenonSpec {
  enum class Kind { token_frequency, ngram_frequency, multi_sentence, end_marker_added } kind = Kind::token_frequency;
  std::string pattern;  // token or space-separated n-gram

  static PhenomenonSpec token(std::string t) { return {Kind::token_frequency, std::move(t)}; }
  static PhenomenonSpec ngram(std::string g) { return {Kind::ngram_frequency, std::move(g)}; }
  static PhenomenonSpec multi_sentence() { return {Kind::multi_sentence, {}}; }
  static PhenomenonSpec end_marker_added() { return {Kind::end_marker_added, {}}; }

  std::string name() const {
    switch (kind) {
      case Kind::token_frequency: return "token:" + pattern;
      case Kind::ngram_frequency: return "ngram:" + pattern;
      case Kind::multi_sentence: return "multi_sentence";
      case Kind::end_marker_added: return "end_marker_added";
    }
    return "?";
  }
};

inline std::string_view kind_name(PhenomenonSpec::Kind k) {
  switch (k) {
    case PhenomenonSpec::Kind::token_frequency: return "token_frequency";
    case PhenomenonSpec::Kind::ngram_frequency: return "ngram_frequency";
    case PhenomenonSpec::Kind::multi_sentence: return "multi_sentence";
    case PhenomenonSpec::Kind::end_marker_added: return "end_marker_added";
  }
  return "?";
}

inline PhenomenonSpec parse_phenomenon(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "token_frequency") return PhenomenonSpec::token(j.at("token").get<std::string>());
  if (kind == "ngram_frequency") return PhenomenonSpec::ngram(j.at("ngram").get<std::string>());
  if (kind == "multi_sentence") return PhenomenonSpec::multi_sentence();
  if (kind == "end_marker_added") return PhenomenonSpec::end_marker_added();
  throw ConfigError("unknown phenomenon kind '" + kind + "'");
}

namespace detail {

inline bool contains_sequence(const std::vector<std::string>& tokens, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > tokens.size()) return false;
  return std::search(tokens.begin(), tokens.end(), needle.begin(), needle.end()) != tokens.end();
}

// ". " followed by a capital letter somewhere inside the text.
inline bool has_internal_sentence_break(std::string_view text) {
  for (std::size_t p = text.find(". "); p != std::string_view::npos; p = text.find(". ", p + 1)) {
    std::size_t q = p + 2;
    while (q < text.size() && text[q] == ' ') ++q;
    if (p > 0 && q < text.size() && std::isupper(static_cast<unsigned char>(text[q]))) return true;
  }
  return false;
}

}  // namespace detail

inline bool phenomenon_present(const PhenomenonSpec& spec, std::string_view text, std::string_view source) {
  switch (spec.kind) {
    case PhenomenonSpec::Kind::token_frequency:
    case PhenomenonSpec::Kind::ngram_frequency:
      return detail::contains_sequence(tokenize(text), tokenize(spec.pattern));
    case PhenomenonSpec::Kind::multi_sentence:
      return detail::has_internal_sentence_break(text);
    case PhenomenonSpec::Kind::end_marker_added:
      return artifacts::ends_with_marker(text) && !artifacts::ends_with_marker(source);
  }
  return false;
}

inline ContingencyTable count_phenomenon(std::span<const std::string> human, std::span<const std::string> machine,
                                         std::optional<std::span<const std::string>> sources,
                                         const PhenomenonSpec& spec) {
  if (human.size() != machine.size()) throw DataError("human and machine sequences are not aligned");
  if (spec.kind == PhenomenonSpec::Kind::end_marker_added && !sources)
    throw ConfigError("end_marker_added needs the source texts");
  if (sources && sources->size() != human.size()) throw DataError("source sequence is not aligned");
  if ((spec.kind == PhenomenonSpec::Kind::token_frequency || spec.kind == PhenomenonSpec::Kind::ngram_frequency) &&
      tokenize(spec.pattern).empty())
    throw ConfigError("token/n-gram phenomenon needs a non-empty pattern");
  ContingencyTable t;
  for (std::size_t i = 0; i < human.size(); ++i) {
    const std::string_view src = sources ? std::string_view((*sources)[i]) : std::string_view();
    ++t.counts[0][phenomenon_present(spec, human[i], src) ? 0 : 1];
    ++t.counts[1][phenomenon_present(spec, machine[i], src) ? 0 : 1];
  }
  return t;
}

struct PhenomenonResult {
  PhenomenonSpec spec;
  ContingencyTable table;
  ChiSquaredResult test;
};

inline std::vector<PhenomenonResult> test_phenomena(const std::vector<ParallelSample>& samples,
                                                    const std::vector<PhenomenonSpec>& specs, double alpha) {
  std::vector<std::string> human, machine, sources;
  for (const auto& s : samples) {
    human.push_back(s.human_translation);
    machine.push_back(s.machine_translation);
    sources.push_back(s.source);
  }
  std::vector<PhenomenonResult> out;
  for (const auto& spec : specs) {
    auto table = count_phenomenon(human, machine, std::span<const std::string>(sources), spec);
    out.push_back({spec, table, chi_squared(table, alpha)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// N-gram ranking over explanations

struct NgramOptions {
  std::size_t n = 1;
  std::size_t k = 20;
  std::size_t min_count = 20;
  double min_abs_score = 0.0;
  double alpha = 0.001;
};

struct NgramScore {
  std::string ngram;
  double mean_score = 0.0;
  std::size_t count = 0;
  ContingencyTable table;  // segment presence, human side vs machine side
  ChiSquaredResult test;
};

// An n-gram occurrence scores the sum of its token scores; the ranking key
// is the mean over all occurrences in both translation inputs. Scores are
// already oriented (positive = machine evidence).
inline std::vector<NgramScore> top_discriminative_ngrams(std::span<const Explanation> store,
                                                         const NgramOptions& opt) {
  if (opt.n < 1 || opt.n > 3) throw ConfigError("n-gram order must be 1, 2 or 3");
  struct Agg {
    double total = 0.0;
    std::size_t count = 0;
    std::uint64_t human_segments = 0;
    std::uint64_t machine_segments = 0;
  };
  std::map<std::string, Agg> agg;
  auto key_at = [&](const std::vector<TokenScore>& v, std::size_t i) {
    std::string key = v[i].token;
    for (std::size_t k = 1; k < opt.n; ++k) key += ' ' + v[i + k].token;
    return key;
  };
  for (const auto& e : store) {
    for (const bool machine_side : {false, true}) {
      const auto& v = machine_side ? e.machine_input() : e.human_input();
      std::set<std::string> seen;
      for (std::size_t i = 0; i + opt.n <= v.size(); ++i) {
        auto key = key_at(v, i);
        double s = 0.0;
        for (std::size_t k = 0; k < opt.n; ++k) s += v[i + k].score;
        auto& a = agg[key];
        a.total += s;
        ++a.count;
        seen.insert(std::move(key));
      }
      for (const auto& key : seen) ++(machine_side ? agg[key].machine_segments : agg[key].human_segments);
    }
  }

  const std::uint64_t segments = store.size();
  std::vector<NgramScore> out;
  for (const auto& [key, a] : agg) {
    const double mean = a.total / static_cast<double>(a.count);
    if (a.count < opt.min_count || std::abs(mean) < opt.min_abs_score)
      continue;
    NgramScore s{key, mean, a.count, {}, {}};
    s.table.counts = {{{a.human_segments, segments - a.human_segments},
                       {a.machine_segments, segments - a.machine_segments}}};
    s.test = chi_squared(s.table, opt.alpha);
    out.push_back(std::move(s));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const NgramScore& a, const NgramScore& b) { return std::abs(a.mean_score) > std::abs(b.mean_score); });
  if (out.size() > opt.k) out.resize(opt.k);
  return out;
}

// ---------------------------------------------------------------------------
// Report

inline nlohmann::json table_json(const ContingencyTable& t) {
  return nlohmann::json::array({nlohmann::json::array({t.counts[0][0], t.counts[0][1]}),
                                nlohmann::json::array({t.counts[1][0], t.counts[1][1]})});
}

inline nlohmann::json test_json(const ChiSquaredResult& r) {
  return {{"testable", r.testable}, {"statistic", r.statistic}, {"p_value", r.p_value}, {"significant", r.significant}};
}

inline nlohmann::json stats_report(const std::vector<PhenomenonResult>& phenomena, const std::vector<NgramScore>& ngrams,
                                   double alpha, std::size_t n) {
  nlohmann::json ph = nlohmann::json::array();
  for (const auto& p : phenomena) {
    nlohmann::json j{{"name", p.spec.name()},
                     {"kind", kind_name(p.spec.kind)},
                     {"table", table_json(p.table)},
                     {"human_rate", p.table.rate(0)},
                     {"machine_rate", p.table.rate(1)}};
    j.update(test_json(p.test));
    ph.push_back(std::move(j));
  }
  nlohmann::json ng = nlohmann::json::array();
  for (const auto& g : ngrams) {
    nlohmann::json j{{"ngram", g.ngram},
                     {"mean_score", g.mean_score},
                     {"count", g.count},
                     {"table", table_json(g.table)},
                     {"human_rate", g.table.rate(0)},
                     {"machine_rate", g.table.rate(1)}};
    j.update(test_json(g.test));
    ng.push_back(std::move(j));
  }
  return {{"alpha", alpha},
          {"critical_value", chi_squared_critical_value(alpha)},
          {"phenomena", std::move(ph)},
          {"ngram_order", n},
          {"ngrams", std::move(ng)}};
}

// Plain-text rendering of a report for terminals.
inline std::string render_report(const nlohmann::json& report) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "phenomenon" << std::right << std::setw(10) << "human" << std::setw(10)
     << "machine" << std::setw(12) << "chi2" << "  sig\n";
  os << std::fixed;
  for (const auto& p : report.at("phenomena")) {
    os << std::left << std::setw(28) << p.at("name").get<std::string>() << std::right << std::setprecision(3)
       << std::setw(10) << p.at("human_rate").get<double>() << std::setw(10) << p.at("machine_rate").get<double>()
       << std::setprecision(2) << std::setw(12) << p.at("statistic").get<double>() << "  "
       << (p.at("significant").get<bool>() ? "*" : (p.at("testable").get<bool>() ? "" : "n/a")) << '\n';
  }
  if (!report.at("ngrams").empty()) {
    os << '\n' << std::left << std::setw(28) << "n-gram" << std::right << std::setw(10) << "mean" << std::setw(10)
       << "count" << std::setw(12) << "chi2" << "  sig\n";
    for (const auto& g : report.at("ngrams")) {
      os << std::left << std::setw(28) << g.at("ngram").get<std::string>() << std::right << std::setprecision(4)
         << std::setw(10) << g.at("mean_score").get<double>() << std::setw(10) << g.at("count").get<std::size_t>()
         << std::setprecision(2) << std::setw(12) << g.at("statistic").get<double>() << "  "
         << (g.at("significant").get<bool>() ? "*" : "") << '\n';
    }
  }
  os << "\nalpha = " << std::setprecision(4) << report.at("alpha").get<double>()
     << ", critical value = " << std::setprecision(3) << report.at("critical_value").get<double>() << '\n';
  return os.str();
}

}  // namespace diamat
