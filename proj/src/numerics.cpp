// SPDX-License-Identifier: Apache-2.0

#include "devft/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "devft/rng.hpp"

namespace devft {

double frobenius_norm(const Matrix& m) {
    double sum = 0.0;
    for (double v : m.values()) sum += v * v;
    return std::sqrt(sum);
}

double l2_norm(const DenseVector& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

double dot(const DenseVector& a, const DenseVector& b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

double cosine_similarity(const DenseVector& a, const DenseVector& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_similarity: length mismatch");
    if (a.empty()) throw std::invalid_argument("cosine_similarity: empty vectors");
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm input (all-zero layer vector)");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

namespace {

double offdiagonal_norm(const Matrix& m) {
    double sum = 0.0;
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) sum += 2.0 * m(i, j) * m(i, j);
    return std::sqrt(sum);
}

void check_symmetric(const Matrix& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("symmetric_eigh: matrix not square");
    const std::size_t n = m.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            if (!std::isfinite(m(i, j)))
                throw std::invalid_argument("symmetric_eigh: non-finite entry");
            if (m(i, j) != m(j, i))
                throw std::invalid_argument("symmetric_eigh: matrix not symmetric");
        }
    }
}

constexpr int kMaxJacobiSweeps = 100;
constexpr double kJacobiTolerance = 1e-12;  // on off-diagonal Frobenius mass, relative to |M|_F

}  // namespace

EigenResult symmetric_eigh(const Matrix& m) {
    check_symmetric(m);
    const std::size_t n = m.rows();
    Matrix a = m;
    Matrix v = Matrix::identity(n);
    const double tol = kJacobiTolerance * std::max(1.0, frobenius_norm(m));

    int sweep = 0;
    for (; sweep < kMaxJacobiSweeps; ++sweep) {
        if (offdiagonal_norm(a) <= tol) break;
        // One cyclic sweep, row-major pair order.
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                const double tau = s / (1.0 + c);

                const double app = a(p, p);
                const double aqq = a(q, q);
                a(p, p) = app - t * apq;
                a(q, q) = aqq + t * apq;
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i == p || i == q) continue;
                    const double aip = a(i, p);
                    const double aiq = a(i, q);
                    a(i, p) = aip - s * (aiq + tau * aip);
                    a(p, i) = a(i, p);
                    a(i, q) = aiq + s * (aip - tau * aiq);
                    a(q, i) = a(i, q);
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = v(i, p);
                    const double viq = v(i, q);
                    v(i, p) = vip - s * (viq + tau * vip);
                    v(i, q) = viq + s * (vip - tau * viq);
                }
            }
        }
    }
    const double residual = offdiagonal_norm(a);
    if (residual > tol)
        throw EighError("symmetric_eigh: no convergence after " +
                            std::to_string(kMaxJacobiSweeps) +
                            " sweeps, off-diagonal norm " + std::to_string(residual),
                        residual);

    // Sort ascending; stable so equal eigenvalues keep rotation order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

    EigenResult result;
    result.eigenvalues.resize(n);
    result.eigenvectors = Matrix(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        const std::size_t src = order[col];
        result.eigenvalues[col] = a(src, src);
        // Sign convention: largest-magnitude component nonnegative (first such
        // component wins on magnitude ties).
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double mag = std::abs(v(i, src));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        const double flip = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < n; ++i) result.eigenvectors(i, col) = flip * v(i, src);
    }
    return result;
}

namespace {

double squared_distance(const Matrix& points, std::size_t row, const Matrix& centroids,
                        std::size_t centroid) {
    double sum = 0.0;
    for (std::size_t j = 0; j < points.cols(); ++j) {
        const double d = points(row, j) - centroids(centroid, j);
        sum += d * d;
    }
    return sum;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
    if (n < static_cast<std::size_t>(k))
        throw std::invalid_argument("kmeans: fewer points than clusters");

    // Greedy farthest-point seeding: seeded uniform first pick, then each next
    // centroid is the point farthest from the chosen set (lowest index on ties).
    Rng rng(seed);
    std::vector<std::size_t> centers;
    centers.push_back(static_cast<std::size_t>(rng.uniform_index(n)));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    Matrix centroids(static_cast<std::size_t>(k), d);
    for (std::size_t j = 0; j < d; ++j) centroids(0, j) = points(centers[0], j);
    while (centers.size() < static_cast<std::size_t>(k)) {
        const std::size_t last = centers.size() - 1;
        for (std::size_t i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(points, i, centroids, last));
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (nearest[i] > best) {
                best = nearest[i];
                arg = i;
            }
        }
        for (std::size_t j = 0; j < d; ++j) centroids(centers.size(), j) = points(arg, j);
        centers.push_back(arg);
    }

    constexpr int kMaxIterations = 200;
    std::vector<int> labels(n, -1);
    std::vector<double> trace;
    int iter = 0;
    for (; iter < kMaxIterations; ++iter) {
        // Assignment step; strict < keeps the lowest centroid index on ties.
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int arg = 0;
            double best = squared_distance(points, i, centroids, 0);
            for (int c = 1; c < k; ++c) {
                const double dist = squared_distance(points, i, centroids, static_cast<std::size_t>(c));
                if (dist < best) {
                    best = dist;
                    arg = c;
                }
            }
            if (labels[i] != arg) {
                labels[i] = arg;
                changed = true;
            }
        }

        // Empty-cluster repair: hand each empty cluster the point farthest
        // from its current centroid, drawn from a cluster that keeps >= 2.
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int label : labels) ++counts[static_cast<std::size_t>(label)];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t arg = n;
            double best = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[static_cast<std::size_t>(labels[i])] < 2) continue;
                const double dist =
                    squared_distance(points, i, centroids, static_cast<std::size_t>(labels[i]));
                if (dist > best) {
                    best = dist;
                    arg = i;
                }
            }
            if (arg == n) throw std::logic_error("kmeans: empty-cluster repair found no donor");
            --counts[static_cast<std::size_t>(labels[arg])];
            labels[arg] = c;
            ++counts[static_cast<std::size_t>(c)];
            changed = true;
        }

        // Update step.
        Matrix sums(static_cast<std::size_t>(k), d);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                sums(static_cast<std::size_t>(labels[i]), j) += points(i, j);
        for (int c = 0; c < k; ++c)
            for (std::size_t j = 0; j < d; ++j)
                centroids(static_cast<std::size_t>(c), j) =
                    sums(static_cast<std::size_t>(c), j) / counts[static_cast<std::size_t>(c)];

        double distortion = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            distortion += squared_distance(points, i, centroids, static_cast<std::size_t>(labels[i]));
        trace.push_back(distortion);

        if (!changed) break;
    }

    KMeansResult result;
    result.assignment.labels = std::move(labels);
    result.assignment.k = k;
    result.centroids = std::move(centroids);
    result.distortion_trace = std::move(trace);
    result.iterations = iter;
    return result;
}

}  // namespace devft
