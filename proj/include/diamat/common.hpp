#pragma once
// Shared vocabulary types, error classes and small deterministic helpers.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace diamat {

// Malformed or missing input data. Maps to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent shapes or configuration values. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values during training or explanation. Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Which translation input holds the machine output.
enum class Side : std::uint8_t { left = 0, right = 1 };

inline std::size_t index_of(Side s) { return static_cast<std::size_t>(s); }
inline Side other(Side s) { return s == Side::left ? Side::right : Side::left; }
inline Side side_from_index(std::size_t i) { return i == 0 ? Side::left : Side::right; }

inline std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Side parse_side(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw ConfigError("unknown side '" + std::string(s) + "'");
}

// Output neuron, named by the class it signals.
enum class Neuron : std::uint8_t { machine, human };

inline std::string_view to_string(Neuron n) { return n == Neuron::machine ? "machine" : "human"; }

inline Neuron parse_neuron(std::string_view s) {
  if (s == "machine") return Neuron::machine;
  if (s == "human") return Neuron::human;
  throw ConfigError("unknown neuron '" + std::string(s) + "'");
}

// Index of the output unit that corresponds to `neuron` when the machine
// translation sits on `machine_side`.
inline std::size_t output_index(Neuron neuron, Side machine_side) {
  const std::size_t m = index_of(machine_side);
  return neuron == Neuron::machine ? m : 1 - m;
}

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      hash_ ^= c;
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(const void* data, std::size_t n) {
    update(std::string_view(static_cast<const char*>(data), n));
  }
  std::uint64_t value() const { return hash_; }
  std::string hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash_;
    return os.str();
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::string checksum_hex(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.hex();
}

using Rng = std::mt19937_64;

// Uniform integer in [0, n) by rejection; independent of the standard
// library's distribution implementations so shuffles are portable.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = Rng::max() - (Rng::max() % n);
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

// Uniform real in [0, 1) from the top 53 bits.
inline double uniform_unit(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal draw (Box-Muller, one value per call).
inline double standard_normal(Rng& rng) {
  double u1 = uniform_unit(rng);
  while (u1 <= 0.0) u1 = uniform_unit(rng);
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace diamat
