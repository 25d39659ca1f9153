#include <catch_amalgamated.hpp>

#include <set>

#include "diamat/sorter.hpp"
#include "support.hpp"

using namespace diamat;

namespace {

Prediction make(std::int64_t id, double left, double right, Side machine = Side::right) {
  Prediction p;
  p.sample_id = id;
  p.logits = {left, right};
  p.true_side = machine;
  p.predicted_side = right > left ? Side::right : Side::left;
  return p;
}

// Independent key: the actual softmax probability in long double.
long double probability(const Prediction& p, Neuron n) {
  const std::size_t own = output_index(n, p.true_side);
  const long double a = p.logits[own], b = p.logits[1 - own];
  return 1.0L / (1.0L + std::exp(b - a));
}

// Insertion sort: stable, no shared code with the library.
std::vector<std::int64_t> brute_force(std::vector<Prediction> ps, Activation act, Neuron n, Direction d) {
  auto key = [&](const Prediction& p) -> long double {
    return act == Activation::logit ? p.logits[output_index(n, p.true_side)] : probability(p, n);
  };
  auto before = [&](const Prediction& a, const Prediction& b) {
    const long double ka = key(a), kb = key(b);
    if (ka != kb) return d == Direction::descending ? ka > kb : ka < kb;
    return a.sample_id < b.sample_id;
  };
  for (std::size_t i = 1; i < ps.size(); ++i)
    for (std::size_t j = i; j > 0 && before(ps[j], ps[j - 1]); --j) std::swap(ps[j], ps[j - 1]);
  std::vector<std::int64_t> ids;
  for (const auto& p : ps) ids.push_back(p.sample_id);
  return ids;
}

}  // namespace

TEST_CASE("sorter examples", "[sorter]") {
  const std::vector<Prediction> one{make(4, 0.1, 0.2)};
  CHECK(sort_predictions(one, {}) == std::vector<std::int64_t>{4});

  const std::vector<Prediction> tied{make(5, 0.0, 1.0), make(2, 0.0, 1.0), make(9, 0.0, 1.0)};
  CHECK(sort_predictions(tied, {}) == std::vector<std::int64_t>{2, 5, 9});
  CHECK(sort_predictions(tied, {Activation::logit, Neuron::human, Direction::ascending}) ==
        std::vector<std::int64_t>{2, 5, 9});

  CHECK(sort_predictions(std::span<const Prediction>(), {}).empty());

  const std::vector<Prediction> mixed{make(1, 0.0, 2.0), make(2, 3.0, 0.0, Side::left), make(3, 0.0, -1.0)};
  CHECK(sort_predictions(mixed, {}) == std::vector<std::int64_t>{2, 1, 3});
  CHECK(sort_predictions(mixed, {Activation::softmax, Neuron::human, Direction::descending}) ==
        std::vector<std::int64_t>{3, 1, 2});
}

TEST_CASE("saturated softmax still orders by confidence", "[sorter]") {
  const std::vector<Prediction> ps{make(1, 0.0, 60.0), make(2, 0.0, 80.0)};
  REQUIRE(1.0 / (1.0 + std::exp(-60.0)) == 1.0 / (1.0 + std::exp(-80.0)));
  CHECK(sort_predictions(ps, {}) == std::vector<std::int64_t>{2, 1});
}

TEST_CASE("sorter matches a brute-force stable sort", "[sorter]") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Prediction> ps;
    for (int i = 0; i < 1000; ++i) {
      // Quantized logits so ties are common.
      const double l = std::round(8.0 * (2.0 * uniform_unit(rng) - 1.0)) / 2.0;
      const double r = std::round(8.0 * (2.0 * uniform_unit(rng) - 1.0)) / 2.0;
      ps.push_back(make(static_cast<std::int64_t>(uniform_index(rng, 100000)), l, r,
                        uniform_index(rng, 2) ? Side::right : Side::left));
    }
    for (auto act : {Activation::logit, Activation::softmax})
      for (auto n : {Neuron::machine, Neuron::human})
        for (auto d : {Direction::descending, Direction::ascending}) {
          const auto got = sort_predictions(ps, {act, n, d});
          CHECK(got == brute_force(ps, act, n, d));
          std::multiset<std::int64_t> want;
          for (const auto& p : ps) want.insert(p.sample_id);
          CHECK(std::multiset<std::int64_t>(got.begin(), got.end()) == want);
        }
  }
}

TEST_CASE("key names parse and reject unknown values", "[sorter]") {
  CHECK(parse_activation("logit") == Activation::logit);
  CHECK(parse_direction("ascending") == Direction::ascending);
  CHECK_THROWS_AS(parse_activation("prob"), ConfigError);
  CHECK_THROWS_AS(parse_direction("up"), ConfigError);
}
