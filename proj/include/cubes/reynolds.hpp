#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cubes::net {

// Kernels are k x k matrices K(ky, kx) holding the weight for the input
// offset (dx, dy) = (kx - r, ky - r), r = (k-1)/2, canvas y up. Rotating the
// kernel by 90 deg CCW therefore matches rotating the input offsets.
Eigen::MatrixXd rotate_kernel_ccw(const Eigen::MatrixXd& K);
Eigen::MatrixXd mirror_kernel_h(const Eigen::MatrixXd& K);  // flips kx

// Orthonormal basis of the eigenvalue-1 eigenspace of the Reynolds operator:
// one indicator per rotation orbit of the k x k grid, scaled 1/sqrt(orbit).
struct InvariantKernelBasis {
  int k = 0;
  std::vector<Eigen::MatrixXd> basis;
};

InvariantKernelBasis reynolds_basis(int k);

// The projector itself, built as the average of the four rotation
// permutation operators on k^2 entries (row-major ky*k+kx vectorization).
Eigen::MatrixXd reynolds_operator(int k);

// W = sum_i coeffs[i] * B_i; rot90(W) = W by construction.
Eigen::MatrixXd build_kernel(const std::vector<double>& coeffs,
                             const InvariantKernelBasis& basis);

}  // namespace cubes::net
