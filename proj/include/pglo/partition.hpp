#pragma once

#include "pglo/archive.hpp"
#include "pglo/core.hpp"
#include "pglo/kmeans.hpp"
#include "pglo/rng.hpp"

#include <set>
#include <vector>

namespace pglo {

// Voronoi partition of the domain: membership of any location is the nearest
// centroid, ties broken by the lowest region index.
class RegionPartition {
public:
    RegionPartition() = default;
    explicit RegionPartition(std::vector<Vector> centroids)
        : centroids_(std::move(centroids)) {}

    int num_regions() const { return static_cast<int>(centroids_.size()); }
    const std::vector<Vector>& centroids() const { return centroids_; }
    const Vector& centroid(int k) const { return centroids_[k]; }

    int assign(const Vector& x) const { return detail::nearest_centroid(x, centroids_); }

    void assign_all(DesignArchive& archive) const {
        for (int i = 0; i < archive.total_points(); ++i)
            archive.set_region(i, assign(archive.point(i).location));
    }

    std::vector<std::vector<int>> members(const DesignArchive& archive) const {
        std::vector<std::vector<int>> out(num_regions());
        for (int i = 0; i < archive.total_points(); ++i) {
            const auto& p = archive.point(i);
            out[p.region_id >= 0 ? p.region_id : assign(p.location)].push_back(i);
        }
        return out;
    }

private:
    std::vector<Vector> centroids_;
};

// K-means on the initial design locations yields the region centroids.
inline RegionPartition partition_space(const std::vector<Vector>& initial_points, int K,
                                       RngStream& rng) {
    if (K < 1) throw ConfigError("partition_space: K must be >= 1");
    if (static_cast<int>(initial_points.size()) < K)
        throw ConfigError("partition_space: need at least K initial points");

    std::set<std::vector<double>> distinct;
    for (const auto& p : initial_points)
        distinct.insert(std::vector<double>(p.data(), p.data() + p.size()));
    if (static_cast<int>(distinct.size()) < K)
        throw ConfigError("partition_space: K exceeds the number of distinct points");

    auto km = kmeans(initial_points, K, rng);
    return RegionPartition(std::move(km.centroids));
}

}  // namespace pglo
