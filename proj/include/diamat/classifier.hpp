#pragma once
// Three-branch convolutional discriminator. The left and right branches
// read the two translations, the middle one the source; max-pooled
// features are concatenated (left, source, right) into a dense layer with
// two outputs. Output 0 fires for "machine is left", output 1 for
// "machine is right".

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "diamat/common.hpp"
#include "diamat/corpus.hpp"
#include "diamat/embed.hpp"
#include "diamat/nn.hpp"

namespace diamat {

struct ArchitectureConfig {
  std::size_t max_len = 60;
  std::size_t dim = 300;
  std::vector<std::size_t> widths{3, 4, 5};
  std::size_t filters_per_width = 64;
  bool use_bias = true;  // false pins every bias to zero

  std::size_t branch_channels() const { return widths.size() * filters_per_width; }
  std::size_t feature_count() const { return 3 * branch_channels(); }

  void validate() const {
    if (max_len == 0 || dim == 0 || widths.empty() || filters_per_width == 0)
      throw ConfigError("architecture: max_len, dim, widths and filters must be non-empty/positive");
    for (auto w : widths)
      if (w == 0 || w > max_len) throw ConfigError("architecture: filter width " + std::to_string(w) + " not in [1, max_len]");
  }
  bool operator==(const ArchitectureConfig&) const = default;
};

inline nlohmann::json to_json(const ArchitectureConfig& c) {
  return {{"max_len", c.max_len}, {"dim", c.dim}, {"widths", c.widths}, {"filters_per_width", c.filters_per_width},
          {"use_bias", c.use_bias}};
}

inline ArchitectureConfig architecture_from_json(const nlohmann::json& j) {
  ArchitectureConfig c;
  c.max_len = j.at("max_len").get<std::size_t>();
  c.dim = j.at("dim").get<std::size_t>();
  c.widths = j.at("widths").get<std::vector<std::size_t>>();
  c.filters_per_width = j.at("filters_per_width").get<std::size_t>();
  c.use_bias = j.at("use_bias").get<bool>();
  return c;
}

enum Branch : std::size_t { kLeft = 0, kSource = 1, kRight = 2 };

struct ClassifierParams {
  ArchitectureConfig config;
  std::array<nn::ConvLayer, 3> branches;  // left, source, right
  nn::DenseLayer dense;                   // 2 x feature_count

  bool operator==(const ClassifierParams&) const = default;
};

// Every parameter array in a fixed order. The optimizer, checksums and the
// finite-difference tests all walk this list.
inline std::vector<std::span<double>> parameter_arrays(ClassifierParams& p) {
  std::vector<std::span<double>> out;
  for (auto& br : p.branches)
    for (auto& bank : br.banks) {
      out.push_back(bank.weights.values());
      out.push_back(bank.bias);
    }
  out.push_back(p.dense.weights.values());
  out.push_back(p.dense.bias);
  return out;
}

inline std::vector<std::span<const double>> parameter_arrays(const ClassifierParams& p) {
  std::vector<std::span<const double>> out;
  for (auto& s : parameter_arrays(const_cast<ClassifierParams&>(p))) out.emplace_back(s.data(), s.size());
  return out;
}

inline ClassifierParams zeros_like(const ClassifierParams& p) {
  ClassifierParams z;
  z.config = p.config;
  for (std::size_t b = 0; b < 3; ++b) z.branches[b] = nn::zeros_like(p.branches[b]);
  z.dense = nn::zeros_like(p.dense);
  return z;
}

// Zero-valued parameters of the right shapes.
inline ClassifierParams make_params(const ArchitectureConfig& cfg) {
  cfg.validate();
  ClassifierParams p;
  p.config = cfg;
  for (auto& br : p.branches)
    for (auto w : cfg.widths)
      br.banks.push_back({w, Matrix(cfg.filters_per_width, w * cfg.dim), std::vector<double>(cfg.filters_per_width, 0.0)});
  p.dense = {Matrix(2, cfg.feature_count()), std::vector<double>(2, 0.0)};
  return p;
}

// He-normal convolution weights, 1/sqrt(F) dense weights, zero biases.
inline ClassifierParams init_params(const ArchitectureConfig& cfg, std::uint64_t seed) {
  ClassifierParams p = make_params(cfg);
  Rng rng(seed);
  for (auto& br : p.branches)
    for (auto& bank : br.banks) {
      const double sd = std::sqrt(2.0 / static_cast<double>(bank.weights.cols()));
      for (double& w : bank.weights.values()) w = sd * standard_normal(rng);
    }
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.feature_count()));
  for (double& w : p.dense.weights.values()) w = sd * standard_normal(rng);
  return p;
}

inline std::string params_checksum(const ClassifierParams& p) {
  Fnv1a h;
  const auto cfg = to_json(p.config).dump();
  h.update(cfg);
  for (auto a : parameter_arrays(p)) {
    const std::uint64_t n = a.size();
    h.update(&n, sizeof n);
    h.update(a.data(), a.size() * sizeof(double));
  }
  return h.hex();
}

struct EmbeddedTriple {
  TokenMatrix left;
  TokenMatrix source;
  TokenMatrix right;
  Side machine_side = Side::right;
  std::int64_t sample_id = 0;

  const TokenMatrix& input(std::size_t branch) const {
    return branch == kLeft ? left : branch == kSource ? source : right;
  }
};

inline EmbeddedTriple embed_triple(const ParallelSample& s, Side machine_side, const VectorTable& table,
                                   std::size_t max_len) {
  if (table.dimension == 0) throw ConfigError("vector table has no dimension");
  auto human = embed_text(s.human_translation, table, max_len);
  auto machine = embed_text(s.machine_translation, table, max_len);
  EmbeddedTriple t;
  t.source = embed_text(s.source, table, max_len);
  t.machine_side = machine_side;
  t.sample_id = s.id;
  if (machine_side == Side::right) {
    t.left = std::move(human);
    t.right = std::move(machine);
  } else {
    t.left = std::move(machine);
    t.right = std::move(human);
  }
  return t;
}

struct Prediction {
  std::int64_t sample_id = 0;
  std::array<double, 2> logits{};   // (left neuron, right neuron)
  std::array<double, 2> softmax{};
  Side predicted_side = Side::left;
  Side true_side = Side::right;

  double logit(Neuron n) const { return logits[output_index(n, true_side)]; }
  double probability(Neuron n) const { return softmax[output_index(n, true_side)]; }
  bool correct() const { return predicted_side == true_side; }
};

struct BranchCache {
  std::vector<nn::FeatureMap> maps;  // one per bank
  std::vector<double> pooled;        // branch channels, bank-major
  std::vector<std::size_t> argmax;   // window start per channel
  std::vector<double> preact;        // pre-activation at argmax
};

struct ForwardCache {
  std::array<BranchCache, 3> branches;
  std::vector<double> features;
  std::array<double, 2> logits{};
};

inline void check_shapes(const EmbeddedTriple& t, const ArchitectureConfig& cfg) {
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& in = t.input(b);
    if (in.max_len() != cfg.max_len || in.dim() != cfg.dim)
      throw ConfigError("input matrix " + std::to_string(in.max_len()) + "x" + std::to_string(in.dim()) +
                        " does not match architecture " + std::to_string(cfg.max_len) + "x" + std::to_string(cfg.dim));
  }
}

inline Prediction forward(const EmbeddedTriple& t, const ClassifierParams& p, ForwardCache& cache) {
  check_shapes(t, p.config);
  cache.features.clear();
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& in = t.input(b);
    auto& bc = cache.branches[b];
    bc = {};
    for (const auto& bank : p.branches[b].banks) {
      auto fm = nn::conv1d_forward(in.values, in.valid_length, bank);
      auto pooled = nn::max_pool(fm.post);
      for (std::size_t c = 0; c < bank.filters(); ++c) {
        bc.pooled.push_back(pooled.values[c]);
        bc.argmax.push_back(pooled.argmax[c]);
        bc.preact.push_back(fm.pre(pooled.argmax[c], c));
      }
      bc.maps.push_back(std::move(fm));
    }
    cache.features.insert(cache.features.end(), bc.pooled.begin(), bc.pooled.end());
  }
  const auto logits = nn::dense_forward(cache.features, p.dense);
  cache.logits = {logits[0], logits[1]};

  Prediction pred;
  pred.sample_id = t.sample_id;
  pred.logits = cache.logits;
  const auto sm = nn::softmax(logits);
  pred.softmax = {sm[0], sm[1]};
  pred.predicted_side = logits[1] > logits[0] ? Side::right : Side::left;
  pred.true_side = t.machine_side;
  return pred;
}

inline Prediction forward(const EmbeddedTriple& t, const ClassifierParams& p) {
  ForwardCache cache;
  return forward(t, p, cache);
}

// Adds d(loss)/d(params) for one forward pass, given d(loss)/d(logits).
inline void accumulate_gradients(const EmbeddedTriple& t, const ClassifierParams& p, const ForwardCache& cache,
                                 std::span<const double> dlogits, ClassifierParams& grad) {
  const auto dfeat = nn::dense_backward(cache.features, dlogits, p.dense, grad.dense);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& bc = cache.branches[b];
    const auto& input = t.input(b).values;
    std::size_t ch = 0;
    for (std::size_t k = 0; k < p.branches[b].banks.size(); ++k) {
      auto& gbank = grad.branches[b].banks[k];
      for (std::size_t c = 0; c < gbank.filters(); ++c, ++ch) {
        const double g = dfeat[offset + ch];
        if (g == 0.0 || bc.preact[ch] <= 0.0) continue;
        nn::conv_backward_at(input, bc.argmax[ch], c, g, gbank);
      }
    }
    offset += ch;
  }
}

struct BatchResult {
  double loss = 0.0;  // mean cross-entropy
  ClassifierParams gradient;
};

// Mean cross-entropy over the batch and its exact gradient. Labels are the
// triples' machine sides.
inline BatchResult loss_and_gradient(std::span<const EmbeddedTriple> batch, const ClassifierParams& p) {
  if (batch.empty()) throw ConfigError("empty batch");
  BatchResult r{0.0, zeros_like(p)};
  const double inv = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  for (const auto& t : batch) {
    forward(t, p, cache);
    const std::size_t label = index_of(t.machine_side);
    r.loss += nn::cross_entropy(cache.logits, label) * inv;
    auto probs = nn::softmax(cache.logits);
    probs[label] -= 1.0;
    for (double& v : probs) v *= inv;
    accumulate_gradients(t, p, cache, probs, r.gradient);
  }
  return r;
}

inline double mean_loss(std::span<const EmbeddedTriple> batch, const ClassifierParams& p) {
  double loss = 0.0;
  for (const auto& t : batch) {
    const auto pred = forward(t, p);
    loss += nn::cross_entropy(pred.logits, index_of(t.machine_side));
  }
  return loss / static_cast<double>(batch.size());
}

struct Optimizer {
  nn::AdamConfig config;
  nn::AdamState state;
};

// One optimizer step on `batch`; returns the batch's mean loss before the
// update. Embeddings are inputs and never change.
inline double backward_and_step(std::span<const EmbeddedTriple> batch, ClassifierParams& p, Optimizer& opt,
                                std::int64_t batch_id = 0) {
  auto r = loss_and_gradient(batch, p);
  if (!std::isfinite(r.loss)) throw NumericError("non-finite loss in batch " + std::to_string(batch_id));
  if (!p.config.use_bias) {
    for (auto& br : r.gradient.branches)
      for (auto& bank : br.banks) std::fill(bank.bias.begin(), bank.bias.end(), 0.0);
    std::fill(r.gradient.dense.bias.begin(), r.gradient.dense.bias.end(), 0.0);
  }
  nn::adam_step(parameter_arrays(p), parameter_arrays(r.gradient), opt.state, opt.config);
  return r.loss;
}

// ---------------------------------------------------------------------------
// Evaluation

struct SidePolicy {
  enum class Kind { fixed_right, random } kind = Kind::fixed_right;
  std::uint64_t seed = 0;

  static SidePolicy fixed_right() { return {}; }
  static SidePolicy random(std::uint64_t seed) { return {Kind::random, seed}; }
};

inline std::vector<Side> draw_sides(std::size_t n, const SidePolicy& policy) {
  std::vector<Side> sides(n, Side::right);
  if (policy.kind == SidePolicy::Kind::random) {
    Rng rng(policy.seed);
    for (auto& s : sides) s = uniform_index(rng, 2) == 0 ? Side::left : Side::right;
  }
  return sides;
}

struct EvalResult {
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
};

inline EvalResult evaluate(const std::vector<ParallelSample>& samples, const ClassifierParams& p,
                           const VectorTable& table, const SidePolicy& policy) {
  if (samples.empty()) throw DataError("evaluation set is empty");
  const auto sides = draw_sides(samples.size(), policy);
  EvalResult r;
  r.predictions.reserve(samples.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto t = embed_triple(samples[i], sides[i], table, p.config.max_len);
    r.predictions.push_back(forward(t, p));
    if (r.predictions.back().correct()) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  ArchitectureConfig architecture;
  nn::AdamConfig optimizer;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 10;
  std::size_t patience = 3;
  double no_signal_margin = 0.05;
  std::uint64_t seed = 0;
};

struct TrainLogEntry {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double loss = 0.0;
  std::optional<double> validation_accuracy;  // set on end-of-epoch entries
};

inline nlohmann::json to_json(const TrainLogEntry& e) {
  nlohmann::json j{{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}};
  j["validation_accuracy"] = e.validation_accuracy ? nlohmann::json(*e.validation_accuracy) : nlohmann::json(nullptr);
  return j;
}

struct TrainResult {
  ClassifierParams params;
  std::vector<TrainLogEntry> log;
  double best_validation_accuracy = 0.0;
  std::size_t best_epoch = 0;
  bool no_signal = false;
};

// Mini-batch Adam with a fresh machine side per sample and epoch, early
// stopping on validation accuracy and best-checkpoint selection.
inline TrainResult train(const std::vector<ParallelSample>& train_samples,
                         const std::vector<ParallelSample>& validation_samples, const VectorTable& table,
                         const TrainConfig& cfg,
                         const std::function<void(const TrainLogEntry&)>& on_log = {}) {
  if (train_samples.empty() || validation_samples.empty())
    throw DataError("training and validation sets must be non-empty");
  if (table.dimension != cfg.architecture.dim)
    throw ConfigError("vector dimension " + std::to_string(table.dimension) + " does not match architecture dim " +
                      std::to_string(cfg.architecture.dim));
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");

  Rng rng(cfg.seed);
  TrainResult result;
  result.params = init_params(cfg.architecture, rng());
  Optimizer opt{cfg.optimizer, {}};
  const auto validation_policy = SidePolicy::random(rng());

  ClassifierParams best = result.params;
  double best_acc = -1.0;
  std::size_t stale = 0;
  std::size_t step = 0;
  std::vector<std::size_t> order(train_samples.size());
  std::vector<EmbeddedTriple> batch;
  auto log = [&](TrainLogEntry e) {
    if (on_log) on_log(e);
    result.log.push_back(std::move(e));
  };

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const Side side = uniform_index(rng, 2) == 0 ? Side::left : Side::right;
        batch.push_back(embed_triple(train_samples[order[k]], side, table, cfg.architecture.max_len));
      }
      const double loss = backward_and_step(batch, result.params, opt, static_cast<std::int64_t>(step));
      log({epoch, ++step, loss, std::nullopt});
    }

    const double acc = evaluate(validation_samples, result.params, table, validation_policy).accuracy;
    log({epoch, step, result.log.empty() ? 0.0 : result.log.back().loss, acc});
    if (acc > best_acc) {
      best_acc = acc;
      best = result.params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  result.params = std::move(best);
  result.best_validation_accuracy = best_acc;
  result.no_signal = best_acc <= 0.5 + cfg.no_signal_margin;
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned JSON. Doubles round-trip exactly through the
// shortest-representation printer.

inline constexpr std::string_view kCheckpointMagic = "diamat-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.size()) throw DataError("matrix data length does not match its shape");
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

}  // namespace detail

inline nlohmann::json params_to_json(const ClassifierParams& p) {
  nlohmann::json branches = nlohmann::json::array();
  for (const auto& br : p.branches) {
    nlohmann::json banks = nlohmann::json::array();
    for (const auto& bank : br.banks)
      banks.push_back({{"width", bank.width}, {"weights", detail::matrix_json(bank.weights)}, {"bias", bank.bias}});
    branches.push_back(std::move(banks));
  }
  return {{"architecture", to_json(p.config)},
          {"branches", std::move(branches)},
          {"dense", {{"weights", detail::matrix_json(p.dense.weights)}, {"bias", p.dense.bias}}}};
}

inline ClassifierParams params_from_json(const nlohmann::json& j) {
  ClassifierParams p = make_params(architecture_from_json(j.at("architecture")));
  const auto& branches = j.at("branches");
  if (branches.size() != 3) throw DataError("checkpoint must hold three branches");
  for (std::size_t b = 0; b < 3; ++b) {
    const auto& banks = branches[b];
    if (banks.size() != p.branches[b].banks.size()) throw DataError("checkpoint bank count mismatch");
    for (std::size_t k = 0; k < banks.size(); ++k) {
      auto& bank = p.branches[b].banks[k];
      if (banks[k].at("width").get<std::size_t>() != bank.width) throw DataError("checkpoint filter width mismatch");
      bank.weights = detail::matrix_from_json(banks[k].at("weights"));
      bank.bias = banks[k].at("bias").get<std::vector<double>>();
      if (bank.weights.rows() != bank.bias.size() || bank.weights.cols() != bank.width * p.config.dim)
        throw DataError("checkpoint bank shape mismatch");
    }
  }
  p.dense.weights = detail::matrix_from_json(j.at("dense").at("weights"));
  p.dense.bias = j.at("dense").at("bias").get<std::vector<double>>();
  if (p.dense.weights.rows() != 2 || p.dense.weights.cols() != p.config.feature_count() || p.dense.bias.size() != 2)
    throw DataError("checkpoint dense shape mismatch");
  return p;
}

struct Checkpoint {
  ClassifierParams params;
  std::uint64_t seed = 0;
  std::string config_checksum;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json j{{"magic", kCheckpointMagic},
                   {"version", kCheckpointVersion},
                   {"seed", ck.seed},
                   {"config_checksum", ck.config_checksum},
                   {"params", params_to_json(ck.params)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out << j.dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
  if (j.value("magic", "") != kCheckpointMagic) throw DataError(path + " is not a checkpoint (bad magic)");
  if (j.value("version", 0) != kCheckpointVersion)
    throw DataError("unsupported checkpoint version in " + path);
  try {
    return {params_from_json(j.at("params")), j.at("seed").get<std::uint64_t>(),
            j.at("config_checksum").get<std::string>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace diamat
