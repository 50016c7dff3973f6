#include "gloss/linalg.hpp"

#include <cmath>

namespace gloss {

std::size_t tri_dim(std::size_t packed_size) {
  const auto d = static_cast<std::size_t>(
      std::llround((std::sqrt(8.0 * static_cast<double>(packed_size) + 1.0) - 1.0) / 2.0));
  if (tri_size(d) != packed_size) {
    throw DimensionError("packed length " + std::to_string(packed_size) +
                         " is not a triangular number");
  }
  return d;
}

Matrix<double> elimination(std::size_t d) {
  Matrix<double> l(tri_size(d), d * d);
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t i = j; i < d; ++i) l(tri_index(d, i, j), j * d + i) = 1.0;
  return l;
}

Matrix<double> commutation(std::size_t d) {
  // vec(A^T) position of A(i,j) is i*d + j; vec(A) position is j*d + i.
  Matrix<double> k(d * d, d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) k(j * d + i, i * d + j) = 1.0;
  return k;
}

}  // namespace gloss
