#pragma once
// Back-propagation of a classification decision into the three input
// matrices, and projection of the result onto tokens.
//
// Two propagation rules share one layer walk (dense -> max-pool -> ReLU ->
// conv): LRP with the epsilon rule, and PatternAttribution, which
// back-projects through weights multiplied component-wise by patterns
// estimated from data.

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamat/classifier.hpp"
#include "diamat/common.hpp"
#include "diamat/tensor.hpp"

namespace diamat {

enum class Method : std::uint8_t { lrp_epsilon, pattern_attribution };

inline std::string_view to_string(Method m) {
  return m == Method::lrp_epsilon ? "lrp_epsilon" : "pattern_attribution";
}

inline Method parse_method(std::string_view s) {
  if (s == "lrp_epsilon") return Method::lrp_epsilon;
  if (s == "pattern_attribution") return Method::pattern_attribution;
  throw ConfigError("unknown explanation method '" + std::string(s) + "'");
}

struct RelevanceMap {
  Matrix left, source, right;
  Neuron target = Neuron::machine;

  Matrix& input(std::size_t b) { return b == kLeft ? left : b == kSource ? source : right; }
  const Matrix& input(std::size_t b) const { return b == kLeft ? left : b == kSource ? source : right; }

  double total() const { return sum(left.values()) + sum(source.values()) + sum(right.values()); }
};

inline RelevanceMap empty_map(const EmbeddedTriple& t, Neuron target) {
  return {Matrix(t.left.max_len(), t.left.dim()), Matrix(t.source.max_len(), t.source.dim()),
          Matrix(t.right.max_len(), t.right.dim()), target};
}

// Winner-take-all: each channel's relevance lands on its argmax position.
inline Matrix route_max_pool(std::span<const double> channel_relevance, std::span<const std::size_t> argmax,
                             std::size_t positions) {
  Matrix out(positions, channel_relevance.size());
  for (std::size_t c = 0; c < channel_relevance.size(); ++c) out(argmax[c], c) = channel_relevance[c];
  return out;
}

namespace detail {

inline void require_cache(const ForwardCache& cache, const ClassifierParams& p) {
  if (cache.features.size() != p.config.feature_count())
    throw ConfigError("relevance propagation needs a forward cache for these parameters");
}

inline double stabilize(double s, double eps) { return s + (s >= 0.0 ? eps : -eps); }

// Shared walk from pooled-feature relevance down to the inputs.
// `project(branch, bank, filter, window_start, relevance, out_window)`
// distributes one filter's relevance over its input window.
template <typename Project>
void propagate_branches(const EmbeddedTriple& t, const ClassifierParams& p, const ForwardCache& cache,
                        std::span<const double> feature_relevance, RelevanceMap& out, Project&& project) {
  std::size_t offset = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& bc = cache.branches[b];
    auto& dst = out.input(b);
    std::size_t ch = 0;
    for (std::size_t k = 0; k < p.branches[b].banks.size(); ++k) {
      const auto& bank = p.branches[b].banks[k];
      const std::size_t positions = t.input(b).max_len() - bank.width + 1;
      const auto routed = route_max_pool(feature_relevance.subspan(offset + ch, bank.filters()),
                                         std::span(bc.argmax).subspan(ch, bank.filters()), positions);
      for (std::size_t c = 0; c < bank.filters(); ++c) {
        const std::size_t pos = bc.argmax[ch + c];
        const double r = routed(pos, c);
        // ReLU: no relevance through a unit that was not active.
        if (r == 0.0 || bc.preact[ch + c] <= 0.0) continue;
        project(b, k, c, pos, r, dst.rows_flat(pos, bank.width));
      }
      ch += bank.filters();
    }
    offset += ch;
  }
}

}  // namespace detail

// LRP-epsilon. Relevance starts as the target logit; every linear unit
// with pre-activation s = sum_i z_i + b hands z_i / (s + eps*sign(s)) of
// its relevance to input i. Bias shares stay with the unit.
inline RelevanceMap lrp_epsilon(const EmbeddedTriple& t, const ClassifierParams& p, const ForwardCache& cache,
                                Neuron target, double epsilon) {
  detail::require_cache(cache, p);
  if (!(epsilon > 0.0)) throw ConfigError("lrp epsilon must be positive");
  const std::size_t j = output_index(target, t.machine_side);
  const double logit = cache.logits[j];
  const double denom = detail::stabilize(logit, epsilon);

  const auto w = p.dense.weights.row(j);
  std::vector<double> feature_relevance(cache.features.size());
  for (std::size_t i = 0; i < feature_relevance.size(); ++i)
    feature_relevance[i] = w[i] * cache.features[i] / denom * logit;

  auto out = empty_map(t, target);
  detail::propagate_branches(
      t, p, cache, feature_relevance, out,
      [&](std::size_t b, std::size_t k, std::size_t c, std::size_t pos, double r, std::span<double> dst) {
        const auto& bank = p.branches[b].banks[k];
        const auto wc = bank.weights.row(c);
        const auto x = t.input(b).values.rows_flat(pos, bank.width);
        double s = bank.bias[c];
        for (std::size_t i = 0; i < x.size(); ++i) s += wc[i] * x[i];
        const double scale = r / detail::stabilize(s, epsilon);
        for (std::size_t i = 0; i < x.size(); ++i) dst[i] += wc[i] * x[i] * scale;
      });
  return out;
}

inline RelevanceMap lrp_epsilon(const EmbeddedTriple& t, const ClassifierParams& p, Neuron target, double epsilon) {
  ForwardCache cache;
  forward(t, p, cache);
  return lrp_epsilon(t, p, cache, target, epsilon);
}

// ---------------------------------------------------------------------------
// Pattern estimation

// Streaming covariance between a unit's input vector x and its
// pre-activation y (Welford co-moments).
class PatternAccumulator {
 public:
  explicit PatternAccumulator(std::size_t size = 0) : mean_x_(size, 0.0), comoment_(size, 0.0) {}

  void add(std::span<const double> x, double y) {
    ++count_;
    const double inv_n = 1.0 / static_cast<double>(count_);
    const double dy = y - mean_y_;
    mean_y_ += dy * inv_n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mean_x_[i] += (x[i] - mean_x_[i]) * inv_n;
      comoment_[i] += (x[i] - mean_x_[i]) * dy;
    }
  }

  std::size_t count() const { return count_; }

  // a = cov(x, y) / (w . cov(x, y)); falls back to w when the unit was
  // never active or the covariance is degenerate.
  std::vector<double> pattern(std::span<const double> w) const {
    std::vector<double> fallback(w.begin(), w.end());
    if (count_ < 2) return fallback;
    const double denom = dot(w, comoment_);
    if (denom == 0.0 || !std::isfinite(denom)) return fallback;
    std::vector<double> a(comoment_.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = comoment_[i] / denom;
    return a;
  }

 private:
  std::size_t count_ = 0;
  double mean_y_ = 0.0;
  std::vector<double> mean_x_;
  std::vector<double> comoment_;
};

// One pattern per linear unit, shaped like that unit's weights.
struct PatternSet {
  std::array<std::vector<Matrix>, 3> conv;  // per branch, per bank: filters x (width*dim)
  Matrix dense;                             // 2 x F
  std::string params_checksum;
  std::size_t samples = 0;
};

// Streams `count` triples from `next(i)` through the frozen network. Conv
// units use every window that touches a real token and has positive
// pre-activation; the output units use every sample.
inline PatternSet learn_patterns(std::size_t count, const std::function<EmbeddedTriple(std::size_t)>& next,
                                 const ClassifierParams& p) {
  if (count == 0) throw DataError("pattern split is empty");
  std::array<std::vector<std::vector<PatternAccumulator>>, 3> conv_acc;
  for (std::size_t b = 0; b < 3; ++b)
    for (const auto& bank : p.branches[b].banks)
      conv_acc[b].emplace_back(bank.filters(), PatternAccumulator(bank.weights.cols()));
  std::vector<PatternAccumulator> dense_acc(2, PatternAccumulator(p.config.feature_count()));

  ForwardCache cache;
  for (std::size_t n = 0; n < count; ++n) {
    const auto t = next(n);
    forward(t, p, cache);
    for (std::size_t b = 0; b < 3; ++b) {
      const auto& in = t.input(b);
      for (std::size_t k = 0; k < p.branches[b].banks.size(); ++k) {
        const auto& bank = p.branches[b].banks[k];
        const auto& fm = cache.branches[b].maps[k];
        const std::size_t positions = std::min(fm.pre.rows(), in.valid_length);
        for (std::size_t pos = 0; pos < positions; ++pos) {
          const auto window = in.values.rows_flat(pos, bank.width);
          for (std::size_t c = 0; c < bank.filters(); ++c)
            if (fm.pre(pos, c) > 0.0) conv_acc[b][k][c].add(window, fm.pre(pos, c));
        }
      }
    }
    for (std::size_t j = 0; j < 2; ++j) dense_acc[j].add(cache.features, cache.logits[j]);
  }

  PatternSet set;
  set.params_checksum = params_checksum(p);
  set.samples = count;
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < p.branches[b].banks.size(); ++k) {
      const auto& bank = p.branches[b].banks[k];
      Matrix a(bank.filters(), bank.weights.cols());
      for (std::size_t c = 0; c < bank.filters(); ++c) {
        const auto pat = conv_acc[b][k][c].pattern(bank.weights.row(c));
        std::copy(pat.begin(), pat.end(), a.row(c).begin());
      }
      set.conv[b].push_back(std::move(a));
    }
  set.dense = Matrix(2, p.config.feature_count());
  for (std::size_t j = 0; j < 2; ++j) {
    const auto pat = dense_acc[j].pattern(p.dense.weights.row(j));
    std::copy(pat.begin(), pat.end(), set.dense.row(j).begin());
  }
  return set;
}

inline PatternSet learn_patterns(const std::vector<EmbeddedTriple>& triples, const ClassifierParams& p) {
  return learn_patterns(triples.size(), [&](std::size_t i) { return triples[i]; }, p);
}

// Pattern split is embedded with the machine translation on the right, as
// in the explanation protocol.
inline PatternSet learn_patterns(const std::vector<ParallelSample>& samples, const ClassifierParams& p,
                                 const VectorTable& table) {
  return learn_patterns(
      samples.size(), [&](std::size_t i) { return embed_triple(samples[i], Side::right, table, p.config.max_len); },
      p);
}

inline void check_patterns(const PatternSet& a, const ClassifierParams& p, bool verify_checksum = true) {
  bool ok = a.dense.rows() == 2 && a.dense.cols() == p.config.feature_count();
  for (std::size_t b = 0; b < 3 && ok; ++b) {
    ok = a.conv[b].size() == p.branches[b].banks.size();
    for (std::size_t k = 0; k < a.conv[b].size() && ok; ++k)
      ok = a.conv[b][k].rows() == p.branches[b].banks[k].weights.rows() &&
           a.conv[b][k].cols() == p.branches[b].banks[k].weights.cols();
  }
  if (!ok) throw ConfigError("pattern set shape does not match classifier parameters");
  if (verify_checksum && a.params_checksum != params_checksum(p))
    throw ConfigError("pattern set was learned for different parameters (checksum " + a.params_checksum + ")");
}

// Gradient-style back-pass seeded with the target logit, where each linear
// unit projects through w (*) a instead of w.
inline RelevanceMap pattern_attribution(const EmbeddedTriple& t, const ClassifierParams& p, const PatternSet& patterns,
                                        const ForwardCache& cache, Neuron target, bool verify_checksum = true) {
  detail::require_cache(cache, p);
  check_patterns(patterns, p, verify_checksum);
  const std::size_t j = output_index(target, t.machine_side);
  const double logit = cache.logits[j];
  const auto w = p.dense.weights.row(j);
  const auto a = patterns.dense.row(j);
  std::vector<double> feature_relevance(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) feature_relevance[i] = w[i] * a[i] * logit;

  auto out = empty_map(t, target);
  detail::propagate_branches(
      t, p, cache, feature_relevance, out,
      [&](std::size_t b, std::size_t k, std::size_t c, std::size_t, double r, std::span<double> dst) {
        const auto wc = p.branches[b].banks[k].weights.row(c);
        const auto ac = patterns.conv[b][k].row(c);
        for (std::size_t i = 0; i < wc.size(); ++i) dst[i] += wc[i] * ac[i] * r;
      });
  return out;
}

// ---------------------------------------------------------------------------
// Token projection

struct TokenScore {
  std::string token;
  double score = 0.0;
  bool operator==(const TokenScore&) const = default;
};

struct Explanation {
  std::int64_t sample_id = 0;
  Method method = Method::lrp_epsilon;
  Neuron target_neuron = Neuron::machine;
  Side machine_side = Side::right;
  Side predicted_side = Side::right;
  std::array<double, 2> logits{};
  double logit_machine = 0.0;
  double softmax_machine = 0.0;
  std::vector<TokenScore> source, left, right;
  std::string checkpoint;  // checksum of the checkpoint file
  std::string config_checksum;

  const std::vector<TokenScore>& input(std::size_t b) const { return b == kLeft ? left : b == kSource ? source : right; }
  std::vector<TokenScore>& input(std::size_t b) { return b == kLeft ? left : b == kSource ? source : right; }
  const std::vector<TokenScore>& machine_input() const { return machine_side == Side::left ? left : right; }
  const std::vector<TokenScore>& human_input() const { return machine_side == Side::left ? right : left; }
  bool correct() const { return predicted_side == machine_side; }
};

// Sums each token's relevance row and orients scores so that positive
// always means machine evidence: relevance for the human neuron is negated,
// and the translation of the class the target neuron does not stand for is
// sign-inverted (for the machine neuron with the machine text on the right,
// that is the left input).
inline Explanation project_to_tokens(const RelevanceMap& map, const EmbeddedTriple& t, const Prediction& pred,
                                     Method method) {
  Explanation e;
  e.sample_id = t.sample_id;
  e.method = method;
  e.target_neuron = map.target;
  e.machine_side = t.machine_side;
  e.predicted_side = pred.predicted_side;
  e.logits = pred.logits;
  e.logit_machine = pred.logit(Neuron::machine);
  e.softmax_machine = pred.probability(Neuron::machine);

  const double base = map.target == Neuron::machine ? 1.0 : -1.0;
  const Side inverted = map.target == Neuron::machine ? other(t.machine_side) : t.machine_side;
  const std::size_t inverted_branch = inverted == Side::left ? kLeft : kRight;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& in = t.input(b);
    const auto& rel = map.input(b);
    const double sign = b == inverted_branch ? -base : base;
    auto& dst = e.input(b);
    dst.reserve(in.valid_length);
    for (std::size_t i = 0; i < in.valid_length; ++i) dst.push_back({in.tokens[i], sign * sum(rel.row(i))});
  }
  return e;
}

inline nlohmann::json to_json(const Explanation& e) {
  auto scores = [](const std::vector<TokenScore>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& ts : v) a.push_back(nlohmann::json::array({ts.token, ts.score}));
    return a;
  };
  return {{"sample_id", e.sample_id},
          {"method", to_string(e.method)},
          {"target_neuron", to_string(e.target_neuron)},
          {"machine_side", to_string(e.machine_side)},
          {"predicted_side", to_string(e.predicted_side)},
          {"logits", e.logits},
          {"logit_machine", e.logit_machine},
          {"softmax_machine", e.softmax_machine},
          {"token_scores", {{"source", scores(e.source)}, {"left", scores(e.left)}, {"right", scores(e.right)}}},
          {"checkpoint", e.checkpoint},
          {"config_checksum", e.config_checksum}};
}

inline Explanation explanation_from_json(const nlohmann::json& j) {
  Explanation e;
  e.sample_id = j.at("sample_id").get<std::int64_t>();
  e.method = parse_method(j.at("method").get<std::string>());
  e.target_neuron = parse_neuron(j.at("target_neuron").get<std::string>());
  e.machine_side = parse_side(j.at("machine_side").get<std::string>());
  e.predicted_side = parse_side(j.at("predicted_side").get<std::string>());
  e.logits = j.at("logits").get<std::array<double, 2>>();
  e.logit_machine = j.at("logit_machine").get<double>();
  e.softmax_machine = j.at("softmax_machine").get<double>();
  const auto& ts = j.at("token_scores");
  for (std::size_t b = 0; b < 3; ++b) {
    const char* key = b == kLeft ? "left" : b == kSource ? "source" : "right";
    for (const auto& pair : ts.at(key)) e.input(b).push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
  }
  e.checkpoint = j.value("checkpoint", "");
  e.config_checksum = j.value("config_checksum", "");
  return e;
}

inline void write_explanations(const std::string& path, const std::vector<Explanation>& store) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : store) out << to_json(e).dump() << '\n';
}

inline std::vector<Explanation> read_explanations(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read explanation store " + path);
  std::vector<Explanation> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(explanation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// Pattern sets serialize next to checkpoints.
inline nlohmann::json to_json(const PatternSet& a) {
  nlohmann::json conv = nlohmann::json::array();
  for (const auto& br : a.conv) {
    nlohmann::json banks = nlohmann::json::array();
    for (const auto& m : br) banks.push_back(detail::matrix_json(m));
    conv.push_back(std::move(banks));
  }
  return {{"magic", "diamat-patterns"}, {"version", 1}, {"params_checksum", a.params_checksum},
          {"samples", a.samples},       {"conv", std::move(conv)}, {"dense", detail::matrix_json(a.dense)}};
}

inline PatternSet patterns_from_json(const nlohmann::json& j) {
  if (j.value("magic", "") != "diamat-patterns") throw DataError("not a pattern file (bad magic)");
  PatternSet a;
  a.params_checksum = j.at("params_checksum").get<std::string>();
  a.samples = j.at("samples").get<std::size_t>();
  const auto& conv = j.at("conv");
  if (conv.size() != 3) throw DataError("pattern file must hold three branches");
  for (std::size_t b = 0; b < 3; ++b)
    for (const auto& m : conv[b]) a.conv[b].push_back(detail::matrix_from_json(m));
  a.dense = detail::matrix_from_json(j.at("dense"));
  return a;
}

}  // namespace diamat
