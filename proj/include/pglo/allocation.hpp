#pragma once

#include "pglo/archive.hpp"
#include "pglo/core.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace pglo {

struct AllocationPlan {
    std::vector<std::int64_t> replications;  // added replications per archive index
    std::int64_t budget = 0;
    int best_index = 0;

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto r : replications) s += r;
        return s;
    }
};

// OCBA over all evaluated points: allocations proportional to
// (sigma_i / Delta_{b,i})^2 for non-best points, and the best point receiving
// sigma_b * sqrt(sum (N_i / sigma_i)^2). The continuous solution is scaled to
// the budget, floored to integers, and the rounding remainder goes to the
// best point.
inline AllocationPlan ocba_allocate(const DesignArchive& archive, std::int64_t budget) {
    const int n = archive.total_points();
    if (n < 2) throw ConfigError("ocba_allocate: need at least 2 design points");
    if (budget < 0) throw ConfigError("ocba_allocate: negative budget");

    AllocationPlan plan;
    plan.budget = budget;
    plan.best_index = archive.best_index();
    plan.replications.assign(n, 0);
    if (budget == 0) return plan;

    const int b = plan.best_index;
    const double y_b = archive.point(b).sample_mean;
    double ymin = y_b, ymax = y_b;
    for (const auto& p : archive.points()) {
        ymin = std::min(ymin, p.sample_mean);
        ymax = std::max(ymax, p.sample_mean);
    }
    const double delta_floor = 1e-8 * std::max(ymax - ymin, 1e-300);

    // continuous ratio solution with an arbitrary positive scale
    std::vector<double> cont(n, 0.0);
    double sum_sq = 0.0;  // sum over non-best of (N_i / sigma_i)^2
    for (int i = 0; i < n; ++i) {
        if (i == b) continue;
        const double sigma = std::sqrt(archive.point(i).sample_variance);
        const double delta = std::max(archive.point(i).sample_mean - y_b, delta_floor);
        const double ratio = sigma / delta;
        cont[i] = ratio * ratio;
        if (sigma > 0.0) {
            const double t = cont[i] / sigma;
            sum_sq += t * t;
        }
    }
    cont[b] = std::sqrt(archive.point(b).sample_variance) * std::sqrt(sum_sq);

    double total = 0.0;
    for (double c : cont) total += c;
    if (!(total > 0.0)) {
        // no noise anywhere: nothing worth replicating
        return plan;
    }

    const double scale = static_cast<double>(budget) / total;
    std::int64_t assigned = 0;
    for (int i = 0; i < n; ++i) {
        plan.replications[i] = static_cast<std::int64_t>(std::floor(cont[i] * scale));
        assigned += plan.replications[i];
    }
    plan.replications[b] += budget - assigned;  // rounding remainder
    return plan;
}

// Assumption-1 floor: every evaluated point must carry at least
// ceil(kappa_slope * N_t) replications. Returns per-point deficits; runs
// before OCBA and its cost is deducted from the stage budget.
inline std::vector<std::int64_t> enforce_min_replications(const DesignArchive& archive,
                                                          double kappa_slope = 0.05) {
    const int n = archive.total_points();
    const auto floor_reps =
        static_cast<std::int64_t>(std::ceil(kappa_slope * static_cast<double>(n)));
    std::vector<std::int64_t> deficit(n, 0);
    for (int i = 0; i < n; ++i)
        deficit[i] = std::max<std::int64_t>(0, floor_reps - archive.point(i).replications);
    return deficit;
}

}  // namespace pglo
