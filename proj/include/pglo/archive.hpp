#pragma once

#include "pglo/core.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace pglo {

// One evaluated location with its replication record. sample_variance is the
// per-observation variance estimate; the sample mean's variance is
// sample_variance / replications.
struct DesignPoint {
    Vector location;
    std::int64_t replications = 0;
    double sample_mean = 0.0;
    double sample_variance = 0.0;
    int region_id = -1;

    double m2 = 0.0;  // running sum of squared deviations, for merging
};

// All evaluated points. Proposals that coincide with an existing location
// merge into its replication record instead of creating a duplicate.
class DesignArchive {
public:
    DesignArchive() = default;
    explicit DesignArchive(Box domain) : domain_(std::move(domain)) {}

    const Box& domain() const { return domain_; }
    const std::vector<DesignPoint>& points() const { return points_; }
    int total_points() const { return static_cast<int>(points_.size()); }
    std::int64_t total_evaluations() const { return total_evaluations_; }

    const DesignPoint& point(int i) const { return points_[i]; }
    void set_region(int i, int region) { points_[i].region_id = region; }

    // Returns the index of the (possibly pre-existing) point. observations
    // are raw replications of the objective at x.
    int add_observations(const Vector& x, std::span<const double> observations,
                         int region_id = -1) {
        if (!domain_.contains(x, 1e-12 * domain_.diameter()))
            throw DomainError("design point outside the domain box");
        if (observations.empty()) throw DomainError("add_observations: empty batch");

        int idx = find(x);
        if (idx < 0) {
            DesignPoint p;
            p.location = domain_.clip(x);
            p.region_id = region_id;
            points_.push_back(std::move(p));
            idx = static_cast<int>(points_.size()) - 1;
        }
        DesignPoint& p = points_[idx];
        for (double y : observations) {
            ++p.replications;
            const double delta = y - p.sample_mean;
            p.sample_mean += delta / static_cast<double>(p.replications);
            p.m2 += delta * (y - p.sample_mean);
        }
        p.sample_variance = p.replications > 1
                                ? p.m2 / static_cast<double>(p.replications - 1)
                                : 0.0;
        total_evaluations_ += static_cast<std::int64_t>(observations.size());
        return idx;
    }

    // Locate an existing point within merge tolerance, -1 if none.
    int find(const Vector& x) const {
        const double tol = merge_tol();
        for (int i = 0; i < static_cast<int>(points_.size()); ++i)
            if ((points_[i].location - x).lpNorm<Eigen::Infinity>() <= tol) return i;
        return -1;
    }

    int best_index() const {
        if (points_.empty()) throw DomainError("archive is empty");
        int b = 0;
        for (int i = 1; i < static_cast<int>(points_.size()); ++i)
            if (points_[i].sample_mean < points_[b].sample_mean) b = i;
        return b;
    }

    double min_mean() const { return points_[best_index()].sample_mean; }

    std::vector<Vector> locations() const {
        std::vector<Vector> out;
        out.reserve(points_.size());
        for (const auto& p : points_) out.push_back(p.location);
        return out;
    }

    double merge_tol() const { return 1e-9 * domain_.diameter(); }

private:
    Box domain_;
    std::vector<DesignPoint> points_;
    std::int64_t total_evaluations_ = 0;
};

}  // namespace pglo
