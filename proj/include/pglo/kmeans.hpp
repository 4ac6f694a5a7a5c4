#pragma once

#include "pglo/core.hpp"
#include "pglo/rng.hpp"

#include <limits>
#include <vector>

namespace pglo {

struct KmeansResult {
    std::vector<Vector> centroids;
    std::vector<int> labels;
};

namespace detail {

// Nearest centroid by squared Euclidean distance, ties to the lowest index.
inline int nearest_centroid(const Vector& x, const std::vector<Vector>& centroids) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int c = 0; c < static_cast<int>(centroids.size()); ++c) {
        const double dd = (x - centroids[c]).squaredNorm();
        if (dd < best_d) {
            best_d = dd;
            best = c;
        }
    }
    return best;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Deterministic given the stream.
// Empty clusters are reseeded with the point farthest from its centroid, so
// every returned cluster is nonempty.
inline KmeansResult kmeans(const std::vector<Vector>& points, int k, RngStream& rng,
                           int max_iter = 60) {
    const int n = static_cast<int>(points.size());
    if (k < 1) throw ConfigError("kmeans: k must be >= 1");
    if (n < k) throw ConfigError("kmeans: fewer points than clusters");

    std::vector<Vector> centroids;
    centroids.reserve(k);

    // k-means++ seeding
    centroids.push_back(points[rng.integer(n)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids) best = std::min(best, (points[i] - c).squaredNorm());
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            // all remaining points coincide with existing centroids
            centroids.push_back(points[rng.integer(n)]);
            continue;
        }
        double u = rng.uniform() * total;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            u -= d2[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        centroids.push_back(points[pick]);
    }

    std::vector<int> labels(n, 0);
    for (int it = 0; it < max_iter; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            const int c = detail::nearest_centroid(points[i], centroids);
            if (c != labels[i]) {
                labels[i] = c;
                changed = true;
            }
        }

        std::vector<Vector> sums(k, Vector::Zero(points[0].size()));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums[labels[i]] += points[i];
            ++counts[labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed with the point farthest from its own centroid
                int far_i = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dd = (points[i] - centroids[labels[i]]).squaredNorm();
                    if (dd > far_d) {
                        far_d = dd;
                        far_i = i;
                    }
                }
                centroids[c] = points[far_i];
                labels[far_i] = c;
                changed = true;
            } else {
                centroids[c] = sums[c] / counts[c];
            }
        }
        if (!changed && it > 0) break;
    }

    // Final assignment pass so labels match the returned centroids under the
    // nearest-centroid rule. Snap any empty cluster's centroid onto its
    // farthest member candidate until all clusters are nonempty.
    for (int pass = 0; pass < k + 1; ++pass) {
        for (int i = 0; i < n; ++i) labels[i] = detail::nearest_centroid(points[i], centroids);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) ++counts[labels[i]];
        int empty = -1;
        for (int c = 0; c < k; ++c)
            if (counts[c] == 0) {
                empty = c;
                break;
            }
        if (empty < 0) break;
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
            if (counts[labels[i]] <= 1) continue;
            const double dd = (points[i] - centroids[labels[i]]).squaredNorm();
            if (dd > far_d) {
                far_d = dd;
                far_i = i;
            }
        }
        centroids[empty] = points[far_i];
    }
    return {std::move(centroids), std::move(labels)};
}

}  // namespace pglo
