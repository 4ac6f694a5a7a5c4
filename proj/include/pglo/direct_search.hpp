#pragma once

#include "pglo/core.hpp"

#include <concepts>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <vector>

namespace pglo {

// --------------------------------------------------------------------------
// Generalized pattern search state: incumbent plus a scalar mesh size over
// the 2d coordinate poll directions. The mesh halves only on failed polls.

struct MeshState {
    Vector incumbent;
    double incumbent_mean = std::numeric_limits<double>::infinity();
    double mesh_size = 0.0;
    int step_count = 0;
};

// Contract every pluggable direct-search method satisfies: propose a finite
// in-domain candidate set, fold poll results back into the state, and report
// termination against a mesh threshold.
template <typename M>
concept DirectSearchMethod = requires(M m, const MeshState& s, const Box& box,
                                      const std::vector<std::pair<Vector, double>>& results,
                                      MeshState& mut, double mmin) {
    { m.next_candidates(s, box) } -> std::convertible_to<std::vector<Vector>>;
    { m.update(mut, results) };
    { m.is_terminated(s, mmin) } -> std::convertible_to<bool>;
};

// incumbent +/- M e_i per coordinate, clipped to the box; candidates that
// collapse onto the incumbent after clipping are dropped.
inline std::vector<Vector> poll_candidates(const MeshState& state, const Box& domain) {
    const int d = domain.dim();
    std::vector<Vector> out;
    out.reserve(2 * d);
    for (int j = 0; j < d; ++j) {
        for (double sign : {+1.0, -1.0}) {
            Vector c = state.incumbent;
            c[j] += sign * state.mesh_size;
            c = domain.clip(c);
            if ((c - state.incumbent).lpNorm<Eigen::Infinity>() <= 0.0) continue;
            bool dup = false;
            for (const auto& prev : out)
                if ((c - prev).lpNorm<Eigen::Infinity>() <= 0.0) dup = true;
            if (!dup) out.push_back(std::move(c));
        }
    }
    return out;
}

// Success requires a strictly better candidate mean; ties and empty result
// sets count as failed polls and halve the mesh.
inline MeshState update_mesh(MeshState state,
                             const std::vector<std::pair<Vector, double>>& results) {
    int best = -1;
    double best_mean = std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(results.size()); ++i) {
        if (results[i].second < best_mean) {
            best_mean = results[i].second;
            best = i;
        }
    }
    if (best >= 0 && best_mean < state.incumbent_mean) {
        state.incumbent = results[best].first;
        state.incumbent_mean = best_mean;
    } else {
        state.mesh_size *= 0.5;
    }
    ++state.step_count;
    return state;
}

inline bool is_terminated(std::span<const MeshState> states, double mesh_min) {
    if (states.empty()) throw DomainError("is_terminated: no live search threads");
    double min_mesh = std::numeric_limits<double>::infinity();
    for (const auto& s : states) min_mesh = std::min(min_mesh, s.mesh_size);
    return min_mesh <= mesh_min;
}

struct PatternSearch {
    std::vector<Vector> next_candidates(const MeshState& s, const Box& box) const {
        return poll_candidates(s, box);
    }
    void update(MeshState& s, const std::vector<std::pair<Vector, double>>& results) const {
        s = update_mesh(std::move(s), results);
    }
    bool is_terminated(const MeshState& s, double mesh_min) const {
        return s.mesh_size <= mesh_min;
    }
};

static_assert(DirectSearchMethod<PatternSearch>);

// --------------------------------------------------------------------------
// Deterministic driver over the poll/update loop for noiseless objectives.
// Also serves as the derivative-free local optimizer behind hyperparameter
// estimation and acquisition refinement.

struct PatternMinimizeResult {
    Vector x;
    double value = 0.0;
    double final_mesh = 0.0;
    int evals = 0;
};

inline PatternMinimizeResult pattern_minimize(const std::function<double(const Vector&)>& f,
                                              const Box& box, const Vector& start,
                                              double initial_mesh, double mesh_min,
                                              int max_evals = 1 << 20) {
    MeshState state;
    state.incumbent = box.clip(start);
    state.incumbent_mean = f(state.incumbent);
    state.mesh_size = initial_mesh;
    int evals = 1;
    while (state.mesh_size > mesh_min && evals < max_evals) {
        std::vector<std::pair<Vector, double>> results;
        for (auto& c : poll_candidates(state, box)) {
            results.emplace_back(c, f(c));
            ++evals;
        }
        state = update_mesh(std::move(state), results);
    }
    return {state.incumbent, state.incumbent_mean, state.mesh_size, evals};
}

// Correctness harness for the PS loop on a smooth convex objective: poll and
// refine until the mesh drops below mesh_min.
inline Vector converge_quadratic_sanity(const std::function<double(const Vector&)>& f,
                                        const Box& box, const Vector& start,
                                        double mesh_min = 1e-6) {
    return pattern_minimize(f, box, start, 0.1 * box.diameter(), mesh_min).x;
}

}  // namespace pglo
