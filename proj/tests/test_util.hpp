#pragma once

#include <cstdint>
#include <random>

#include "casediag/ops.hpp"
#include "casediag/tensor.hpp"

namespace casediag::test {

inline ArrayX<double> random_array(std::int64_t n, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> uni(lo, hi);
  ArrayX<double> a(n);
  for (auto& v : a) v = uni(rng);
  return a;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad = false,
                                    double lo = -1.0, double hi = 1.0) {
  return Tensor<double>::from_values(shape, random_array(shape_numel(shape), rng, lo, hi),
                                     requires_grad);
}

/// Direct nested-loop cross-correlation; the independent oracle for conv3d.
inline ArrayX<double> conv3d_oracle(const ArrayX<double>& in, const Shape& in_shape,
                                    const ArrayX<double>& ker, const Shape& ker_shape,
                                    Triple stride, Triple pad) {
  const int Ci = in_shape[0], X = in_shape[1], Y = in_shape[2], Z = in_shape[3];
  const int Co = ker_shape[0], KX = ker_shape[2], KY = ker_shape[3], KZ = ker_shape[4];
  const int OX = (X + 2 * pad[0] - KX) / stride[0] + 1;
  const int OY = (Y + 2 * pad[1] - KY) / stride[1] + 1;
  const int OZ = (Z + 2 * pad[2] - KZ) / stride[2] + 1;
  ArrayX<double> out(std::int64_t(Co) * OX * OY * OZ);
  for (int co = 0; co < Co; ++co)
    for (int zo = 0; zo < OZ; ++zo)
      for (int yo = 0; yo < OY; ++yo)
        for (int xo = 0; xo < OX; ++xo) {
          double acc = 0;
          for (int ci = 0; ci < Ci; ++ci)
            for (int kz = 0; kz < KZ; ++kz)
              for (int ky = 0; ky < KY; ++ky)
                for (int kx = 0; kx < KX; ++kx) {
                  const int xi = xo * stride[0] + kx - pad[0];
                  const int yi = yo * stride[1] + ky - pad[1];
                  const int zi = zo * stride[2] + kz - pad[2];
                  if (xi < 0 || xi >= X || yi < 0 || yi >= Y || zi < 0 || zi >= Z) continue;
                  acc += in[idx4(ci, xi, yi, zi, X, Y, Z)] *
                         ker[idx5(co, ci, kx, ky, kz, Ci, KX, KY, KZ)];
                }
          out[idx4(co, xo, yo, zo, OX, OY, OZ)] = acc;
        }
  return out;
}

}  // namespace casediag::test
