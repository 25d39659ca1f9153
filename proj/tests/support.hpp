#pragma once
// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "diamat/classifier.hpp"
#include "diamat/common.hpp"

namespace testing {

inline diamat::ArchitectureConfig tiny_config(std::size_t max_len = 6, std::size_t dim = 4,
                                              std::vector<std::size_t> widths = {2, 3}, std::size_t filters = 2,
                                              bool use_bias = true) {
  diamat::ArchitectureConfig c;
  c.max_len = max_len;
  c.dim = dim;
  c.widths = std::move(widths);
  c.filters_per_width = filters;
  c.use_bias = use_bias;
  return c;
}

// Every weight and (if enabled) bias drawn from N(0, scale^2).
inline diamat::ClassifierParams random_params(const diamat::ArchitectureConfig& cfg, std::uint64_t seed,
                                              double scale = 0.5) {
  auto p = diamat::make_params(cfg);
  diamat::Rng rng(seed);
  for (auto& br : p.branches)
    for (auto& bank : br.banks) {
      for (double& w : bank.weights.values()) w = scale * diamat::standard_normal(rng);
      if (cfg.use_bias)
        for (double& b : bank.bias) b = scale * diamat::standard_normal(rng);
    }
  for (double& w : p.dense.weights.values()) w = scale * diamat::standard_normal(rng);
  if (cfg.use_bias)
    for (double& b : p.dense.bias) b = scale * diamat::standard_normal(rng);
  return p;
}

inline diamat::TokenMatrix random_tokens(std::size_t max_len, std::size_t dim, std::size_t valid, diamat::Rng& rng) {
  diamat::TokenMatrix m;
  m.values = diamat::Matrix(max_len, dim);
  m.valid_length = valid;
  for (std::size_t i = 0; i < valid; ++i) {
    m.tokens.push_back("t" + std::to_string(i));
    for (double& v : m.values.row(i)) v = diamat::standard_normal(rng);
  }
  return m;
}

// Random triple; valid lengths are drawn in [1, max_len] unless `full`.
inline diamat::EmbeddedTriple random_triple(const diamat::ArchitectureConfig& cfg, diamat::Rng& rng,
                                            bool full = false) {
  auto len = [&] { return full ? cfg.max_len : 1 + diamat::uniform_index(rng, cfg.max_len); };
  diamat::EmbeddedTriple t;
  t.left = random_tokens(cfg.max_len, cfg.dim, len(), rng);
  t.source = random_tokens(cfg.max_len, cfg.dim, len(), rng);
  t.right = random_tokens(cfg.max_len, cfg.dim, len(), rng);
  t.machine_side = diamat::uniform_index(rng, 2) ? diamat::Side::right : diamat::Side::left;
  t.sample_id = static_cast<std::int64_t>(diamat::uniform_index(rng, 1000000));
  return t;
}

// Relative error with an absolute floor.
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("diamat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
