#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rwlab {

// 64-bit FNV-1a over raw bytes. Used for artifact hashing and seed derivation.
std::uint64_t fnv1a64(std::string_view bytes);

// One splitmix64 mixing step.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic RNG with portable integer/real derivations. std:: distributions
// are implementation-defined, so all draws go through this class to keep
// outputs byte-identical for a given seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), state_(seed) {}

  // Named per-stage stream derived from the root seed.
  static RngStream for_stage(std::uint64_t root_seed, std::string_view stage);

  // Child stream independent of how much of this stream has been consumed.
  RngStream substream(std::uint64_t index) const;

  std::uint64_t next_u64();
  std::uint64_t below(std::uint64_t n);          // uniform in [0, n)
  std::int64_t int_in(std::int64_t lo, std::int64_t hi);  // inclusive
  double unit();                                  // [0, 1)

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    if (items.empty()) throw std::invalid_argument("pick from empty list");
    return items[below(items.size())];
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

// Row-major dense matrix, just big enough for the policy and value math.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

bool all_finite(std::span<const double> xs);

// Fixed-precision float formatting for report/log emission.
std::string format_double(double x, int precision);

}  // namespace rwlab
