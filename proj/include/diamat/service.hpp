#pragma once
// Read-only JSON API over an explanation store. Request handling is a pure
// function of the immutable store and the query, so the handlers can be
// exercised without a socket; `register_routes` wires them into httplib.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "diamat/explainer.hpp"
#include "diamat/sorter.hpp"

namespace diamat {

inline double sort_value(const Explanation& e, const SortKey& key) {
  return sort_value(std::span<const double, 2>(e.logits), e.machine_side, key);
}

struct FilterSpec {
  std::optional<bool> correct;
  double softmax_lo = 0.0;
  double softmax_hi = 1.0;
  std::string query;
  double min_score = 0.0;  // minimum of the sample's largest |token score|
};

inline double max_abs_score(const Explanation& e) {
  double m = 0.0;
  for (std::size_t b = 0; b < 3; ++b)
    for (const auto& ts : e.input(b)) m = std::max(m, std::abs(ts.score));
  return m;
}

inline bool matches(const Explanation& e, const FilterSpec& f) {
  if (f.correct && e.correct() != *f.correct) return false;
  if (e.softmax_machine < f.softmax_lo || e.softmax_machine > f.softmax_hi) return false;
  if (!f.query.empty()) {
    bool hit = false;
    for (std::size_t b = 0; b < 3 && !hit; ++b)
      for (const auto& ts : e.input(b))
        if (ts.token.find(f.query) != std::string::npos) {
          hit = true;
          break;
        }
    if (!hit) return false;
  }
  return max_abs_score(e) >= f.min_score;
}

// Scores plus per-sample intensities score / max|score| in [-1, 1].
inline nlohmann::json segment_view(const Explanation& e, std::size_t rank) {
  const double scale = max_abs_score(e);
  auto tokens = [scale](const std::vector<TokenScore>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& ts : v)
      a.push_back({{"token", ts.token}, {"score", ts.score}, {"intensity", scale > 0.0 ? ts.score / scale : 0.0}});
    return a;
  };
  return {{"sample_id", e.sample_id},
          {"rank", rank},
          {"true_label", to_string(e.machine_side)},
          {"predicted_label", to_string(e.predicted_side)},
          {"correct", e.correct()},
          {"logits", e.logits},
          {"logit_machine", e.logit_machine},
          {"softmax_machine", e.softmax_machine},
          {"method", to_string(e.method)},
          {"tokens", {{"source", tokens(e.source)}, {"left", tokens(e.left)}, {"right", tokens(e.right)}}}};
}

struct ApiResponse {
  int status = 200;
  std::string body;
};

using QueryParams = std::multimap<std::string, std::string>;

class Api {
 public:
  static constexpr std::size_t kDefaultLimit = 20;
  static constexpr std::size_t kMaxLimit = 200;

  Api(std::vector<Explanation> store, std::optional<std::string> stats_body, nlohmann::json meta)
      : store_(std::move(store)), stats_(std::move(stats_body)), meta_(std::move(meta)) {
    for (std::size_t i = 0; i < store_.size(); ++i) by_id_.emplace(store_[i].sample_id, i);
  }

  const std::vector<Explanation>& store() const { return store_; }

  ApiResponse segments(const QueryParams& q) const {
    SortKey key;
    FilterSpec filter;
    std::size_t offset = 0;
    std::size_t limit = kDefaultLimit;
    try {
      if (auto v = get(q, "activation")) key.activation = parse_activation(*v);
      if (auto v = get(q, "neuron")) key.neuron = parse_neuron(*v);
      if (auto v = get(q, "direction")) key.direction = parse_direction(*v);
      if (auto v = get(q, "correctness")) {
        if (*v == "correct") filter.correct = true;
        else if (*v == "incorrect") filter.correct = false;
        else throw ConfigError("correctness must be 'correct' or 'incorrect'");
      }
      if (auto v = get(q, "softmax_lo")) filter.softmax_lo = parse_real(*v, "softmax_lo");
      if (auto v = get(q, "softmax_hi")) filter.softmax_hi = parse_real(*v, "softmax_hi");
      if (auto v = get(q, "q")) filter.query = *v;
      if (auto v = get(q, "min_score")) filter.min_score = parse_real(*v, "min_score");
      if (auto v = get(q, "offset")) offset = parse_count(*v, "offset");
      if (auto v = get(q, "limit")) limit = parse_count(*v, "limit");
      if (!(filter.softmax_lo >= 0.0 && filter.softmax_hi <= 1.0 && filter.softmax_lo <= filter.softmax_hi))
        throw ConfigError("softmax range must satisfy 0 <= softmax_lo <= softmax_hi <= 1");
      if (limit < 1 || limit > kMaxLimit) throw ConfigError("limit must be between 1 and 200");
    } catch (const ConfigError& e) {
      return error(400, e.what());
    }

    const auto order = sort_indices(std::span<const Explanation>(store_), key);
    std::vector<std::size_t> ranks(store_.size());
    for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = r + 1;

    nlohmann::json items = nlohmann::json::array();
    std::size_t total = 0;
    for (auto i : order) {
      if (!matches(store_[i], filter)) continue;
      if (total >= offset && items.size() < limit) items.push_back(segment_view(store_[i], ranks[i]));
      ++total;
    }
    nlohmann::json body{{"total", total},
                        {"offset", offset},
                        {"limit", limit},
                        {"key",
                         {{"activation", to_string(key.activation)},
                          {"neuron", to_string(key.neuron)},
                          {"direction", to_string(key.direction)}}},
                        {"items", std::move(items)}};
    return {200, body.dump()};
  }

  // Rank is reported under the default key.
  ApiResponse segment(std::string_view id_text) const {
    std::int64_t id = 0;
    auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), id);
    if (ec != std::errc() || ptr != id_text.data() + id_text.size()) return error(400, "segment id must be an integer");
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return error(404, "unknown segment " + std::string(id_text));
    const auto order = sort_indices(std::span<const Explanation>(store_), SortKey{});
    const auto pos = std::find(order.begin(), order.end(), it->second) - order.begin();
    return {200, segment_view(store_[it->second], static_cast<std::size_t>(pos) + 1).dump()};
  }

  ApiResponse stats() const {
    if (!stats_) return error(404, "stats report not generated; run stats");
    return {200, *stats_};
  }

  ApiResponse meta() const { return {200, meta_.dump()}; }

 private:
  static std::optional<std::string> get(const QueryParams& q, const std::string& name) {
    auto it = q.find(name);
    if (it == q.end()) return std::nullopt;
    return it->second;
  }

  static double parse_real(const std::string& s, const char* name) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be a number");
    return v;
  }

  static std::size_t parse_count(const std::string& s, const char* name) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw ConfigError(std::string(name) + " must be a non-negative integer");
    return v;
  }

  static ApiResponse error(int status, const std::string& message) {
    return {status, nlohmann::json{{"error", message}, {"status", status}}.dump()};
  }

  std::vector<Explanation> store_;
  std::optional<std::string> stats_;
  nlohmann::json meta_;
  std::unordered_map<std::int64_t, std::size_t> by_id_;
};

inline void register_routes(httplib::Server& server, const Api& api) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json; charset=utf-8");
  };
  server.Get("/api/segments", [&api, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.segments(req.params));
  });
  server.Get(R"(/api/segments/([^/]+))", [&api, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, api.segment(req.matches[1].str()));
  });
  server.Get("/api/stats", [&api, reply](const httplib::Request&, httplib::Response& res) { reply(res, api.stats()); });
  server.Get("/api/meta", [&api, reply](const httplib::Request&, httplib::Response& res) { reply(res, api.meta()); });
}

}  // namespace diamat
