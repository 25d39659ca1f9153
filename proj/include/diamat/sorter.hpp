#pragma once
// Orders predictions by classification confidence.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diamat/classifier.hpp"
#include "diamat/common.hpp"

namespace diamat {

enum class Activation : std::uint8_t { logit, softmax };
enum class Direction : std::uint8_t { descending, ascending };

inline std::string_view to_string(Activation a) { return a == Activation::logit ? "logit" : "softmax"; }
inline std::string_view to_string(Direction d) { return d == Direction::descending ? "descending" : "ascending"; }

inline Activation parse_activation(std::string_view s) {
  if (s == "logit") return Activation::logit;
  if (s == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

inline Direction parse_direction(std::string_view s) {
  if (s == "descending") return Direction::descending;
  if (s == "ascending") return Direction::ascending;
  throw ConfigError("unknown direction '" + std::string(s) + "'");
}

struct SortKey {
  Activation activation = Activation::softmax;
  Neuron neuron = Neuron::machine;
  Direction direction = Direction::descending;
};

// Sort value for one prediction. The softmax of a neuron in a two-way
// output is a monotone function of (own logit - other logit); that
// difference is used directly so saturated probabilities (both exactly
// 1.0 in floating point) still order by confidence.
inline double sort_value(std::span<const double, 2> logits, Side machine_side, const SortKey& key) {
  const double own = logits[output_index(key.neuron, machine_side)];
  if (key.activation == Activation::logit) return own;
  const double rival = logits[1 - output_index(key.neuron, machine_side)];
  return own - rival;
}

inline double sort_value(const Prediction& p, const SortKey& key) {
  return sort_value(std::span<const double, 2>(p.logits), p.true_side, key);
}

// Stable order by the key; equal values fall back to ascending id.
template <typename T>
std::vector<std::size_t> sort_indices(std::span<const T> items, const SortKey& key) {
  std::vector<double> values(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) values[i] = sort_value(items[i], key);
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b])
      return key.direction == Direction::descending ? values[a] > values[b] : values[a] < values[b];
    return items[a].sample_id < items[b].sample_id;
  });
  return idx;
}

inline std::vector<std::int64_t> sort_predictions(std::span<const Prediction> predictions, const SortKey& key) {
  std::vector<std::int64_t> ids;
  ids.reserve(predictions.size());
  for (auto i : sort_indices(predictions, key)) ids.push_back(predictions[i].sample_id);
  return ids;
}

}  // namespace diamat
