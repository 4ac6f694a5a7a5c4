#pragma once

#include "pglo/core.hpp"
#include "pglo/rng.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace pglo {

// Latin hypercube sample of n points in the given box: one point per stratum
// per dimension, jittered within the stratum.
inline std::vector<Vector> latin_hypercube(int n, const Box& box, RngStream& rng) {
    const int d = box.dim();
    std::vector<Vector> pts(n, Vector(d));
    std::vector<int> perm(n);
    for (int j = 0; j < d; ++j) {
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        for (int i = 0; i < n; ++i) {
            const double u = (perm[i] + rng.uniform()) / n;
            pts[i][j] = box.lower()[j] + u * (box.upper()[j] - box.lower()[j]);
        }
    }
    return pts;
}

}  // namespace pglo
