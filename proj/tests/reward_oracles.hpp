#pragma once

#include <cmath>
#include <vector>

#include "mghl/tensor.hpp"

// Reference versions of the intrinsic rewards written from the cell
// coordinates rather than from masks or library helpers.
namespace mghl::oracle {

/// Block k of a (C,H,W) frame split into bs x bs tiles, row-major over tiles.
inline double pixel_control(const Tensor& prev, const Tensor& cur, std::size_t bs, std::size_t k, double eta) {
  const std::size_t C = cur.dim(0), H = cur.dim(1), W = cur.dim(2);
  const std::size_t tiles_per_row = W / bs;
  double inside = 0.0, total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t q = 0; q < W; ++q) {
        const std::size_t i = (c * H + r) * W + q;
        const double d = cur[i] - prev[i];
        total += d * d;
        if ((r / bs) * tiles_per_row + q / bs == k) inside += d * d;
      }
    }
  }
  return total == 0.0 ? 0.0 : eta * inside / total;
}

inline double feature_control(const Tensor& prev, const Tensor& cur, std::size_t k, double eta) {
  const std::size_t C = cur.dim(0), HW = cur.dim(1) * cur.dim(2);
  std::vector<double> norms(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t p = 0; p < HW; ++p) {
      const double d = cur[c * HW + p] - prev[c * HW + p];
      norms[c] += d * d;
    }
    norms[c] = std::sqrt(norms[c]);
  }
  double total = 0.0;
  for (double n : norms) total += n;
  return total == 0.0 ? 0.0 : eta * norms[k] / total;
}

/// Actions 0..3 move N, S, E, W; action 4 interacts and stands still.
/// Directions use the same numbering with 4 meaning still.
inline double direction_control(std::size_t action, std::size_t direction) {
  std::size_t moved = 4;
  switch (action) {
    case 0: moved = 0; break;
    case 1: moved = 1; break;
    case 2: moved = 2; break;
    case 3: moved = 3; break;
    default: moved = 4;
  }
  return moved == direction ? 0.01 : 0.0;
}

}  // namespace mghl::oracle
