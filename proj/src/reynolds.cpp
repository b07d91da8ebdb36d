#include "cubes/reynolds.hpp"

#include <cmath>
#include <stdexcept>

namespace cubes::net {

Eigen::MatrixXd rotate_kernel_ccw(const Eigen::MatrixXd& K) {
  const int k = int(K.rows());
  Eigen::MatrixXd out(k, k);
  // offset (dx, dy) -> (-dy, dx): entry (ky, kx) moves to (kx, k-1-ky)
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) out(kx, k - 1 - ky) = K(ky, kx);
  return out;
}

Eigen::MatrixXd mirror_kernel_h(const Eigen::MatrixXd& K) {
  return K.rowwise().reverse();
}

InvariantKernelBasis reynolds_basis(int k) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("reynolds_basis: k must be odd");
  InvariantKernelBasis out;
  out.k = k;
  std::vector<uint8_t> seen(size_t(k) * k, 0);
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      if (seen[size_t(ky) * k + kx]) continue;
      // collect the rotation orbit of this entry
      std::vector<std::pair<int, int>> orbit;
      int y = ky, x = kx;
      do {
        orbit.emplace_back(y, x);
        seen[size_t(y) * k + x] = 1;
        int ny = x, nx = k - 1 - y;  // one CCW step
        y = ny;
        x = nx;
      } while (!(y == ky && x == kx));
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(k, k);
      double v = 1.0 / std::sqrt(double(orbit.size()));
      for (auto [oy, ox] : orbit) b(oy, ox) = v;
      out.basis.push_back(std::move(b));
    }
  return out;
}

Eigen::MatrixXd reynolds_operator(int k) {
  if (k < 1 || k % 2 == 0)
    throw std::invalid_argument("reynolds_operator: k must be odd");
  const int n = k * k;
  Eigen::MatrixXd rot = Eigen::MatrixXd::Zero(n, n);
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx) {
      int src = ky * k + kx;
      int dst = kx * k + (k - 1 - ky);
      rot(dst, src) = 1.0;
    }
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < 4; ++i) {
    sum += acc;
    acc = rot * acc;
  }
  return sum / 4.0;
}

Eigen::MatrixXd build_kernel(const std::vector<double>& coeffs,
                             const InvariantKernelBasis& basis) {
  if (coeffs.size() != basis.basis.size())
    throw std::invalid_argument("build_kernel: coefficient count != basis size");
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(basis.k, basis.k);
  for (size_t i = 0; i < coeffs.size(); ++i) W += coeffs[i] * basis.basis[i];
  return W;
}

}  // namespace cubes::net
