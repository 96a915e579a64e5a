// SPDX-License-Identifier: Apache-2.0

#ifndef DEVFT_NUMERICS_HPP
#define DEVFT_NUMERICS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "devft/matrix.hpp"

namespace devft {

/// Thrown when the Jacobi sweep cap is reached before the off-diagonal mass
/// falls under tolerance. Carries the residual for diagnostics.
class EighError : public std::runtime_error {
public:
    EighError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const { return residual_; }

private:
    double residual_;
};

struct EigenResult {
    std::vector<double> eigenvalues;  // ascending
    Matrix eigenvectors;              // orthonormal columns, same order
};

struct ClusterAssignment {
    std::vector<int> labels;  // one label in [0, k) per point
    int k = 0;
};

struct KMeansResult {
    ClusterAssignment assignment;
    Matrix centroids;                      // k x d
    std::vector<double> distortion_trace;  // squared-distance sum after each iteration
    int iterations = 0;
};

/// <a,b> / (|a||b|), clamped to [-1, 1]. Throws std::invalid_argument on
/// length mismatch or a zero-norm operand (degenerate all-zero layer).
double cosine_similarity(const DenseVector& a, const DenseVector& b);

/// Full spectrum of a symmetric matrix via cyclic Jacobi rotations.
/// Deterministic: fixed rotation order, eigenvalues ascending, and each
/// eigenvector flipped so its largest-magnitude component is nonnegative.
EigenResult symmetric_eigh(const Matrix& m);

/// Lloyd iterations with greedy farthest-point seeding from `seed`.
/// Ties in nearest-centroid go to the lowest centroid index; empty clusters
/// are repaired by reassigning the point farthest from its centroid.
/// Throws std::invalid_argument when n < k or k < 1.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed);

}  // namespace devft

#endif  // DEVFT_NUMERICS_HPP
