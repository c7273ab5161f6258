#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace switchcap {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles. Dimensions are explicit everywhere;
/// there is no broadcasting.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows * cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
  static Matrix identity(std::size_t n);
};

/// Deterministic splittable generator (SplitMix64). Equal seeds give
/// bit-identical draw sequences on every platform; uniform doubles are
/// derived from the top 53 bits so no libm or distribution object is
/// involved.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);

  /// Uniform index in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);

  /// Independent child generator seeded from this one's stream.
  Rng split() { return Rng(next_u64()); }

 private:
  std::uint64_t state_;
};

/// Seeded in-place Fisher-Yates shuffle (std::shuffle is not
/// specified bit-for-bit across standard libraries).
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  if (items.size() < 2) return;
  for (std::size_t i = items.size() - 1; i > 0; --i) {
    std::size_t j = rng.uniform_index(i + 1);
    std::swap(items[i], items[j]);
  }
}

Vec matvec(const Matrix& m, const Vec& v);

Vec sigmoid(const Vec& v);
Vec tanh(const Vec& v);
Vec hadamard(const Vec& a, const Vec& b);
Vec concat(const Vec& a, const Vec& b);

/// Softmax with max-subtraction; output is nonnegative and sums to 1.
Vec softmax(const Vec& logits);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

}  // namespace switchcap
