#pragma once

#include "pglo/archive.hpp"
#include "pglo/core.hpp"
#include "pglo/direct_search.hpp"
#include "pglo/lhs.hpp"
#include "pglo/rng.hpp"
#include "pglo/surrogate.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace pglo {

// --------------------------------------------------------------------------
// Density penalty: diminishing returns for candidates crowded by existing
// evaluations. Artificial phantom points injected at specific locations count
// toward the neighborhood like real design points.

class PenaltyState {
public:
    PenaltyState(double v, double a) : v_(v), a_(a) {
        if (v <= 0.0 || a <= 0.0) throw ConfigError("penalty parameters must be positive");
    }

    double v() const { return v_; }
    double a() const { return a_; }

    void add_artificial(const Vector& at, double count) { artificial_.emplace_back(at, count); }
    const std::vector<std::pair<Vector, double>>& artificial() const { return artificial_; }

    // n_a(x): archive points within the a-neighborhood, counted domain-wide,
    // plus any artificial points there.
    double neighbor_count(const Vector& x, const DesignArchive& archive) const {
        double n = 0.0;
        for (const auto& p : archive.points())
            if ((p.location - x).norm() <= a_) n += 1.0;
        for (const auto& [loc, cnt] : artificial_)
            if ((loc - x).norm() <= a_) n += cnt;
        return n;
    }

    double factor(double n_a) const { return 1.0 / (1.0 + std::exp(n_a / v_ - 5.0)); }

    double factor_at(const Vector& x, const DesignArchive& archive) const {
        return factor(neighbor_count(x, archive));
    }

private:
    double v_;
    double a_;
    std::vector<std::pair<Vector, double>> artificial_;
};

// --------------------------------------------------------------------------
// Closed-form criteria.

// Modified EI: improvement of the bounded overall predictor under the local
// spatial uncertainty s_z only.
inline double mei(const Prediction& p, double y_min) {
    return expected_improvement(p.mean_bounded, std::sqrt(std::max(p.var_z, 0.0)), y_min);
}

// Global EI times the density penalty.
inline double gei(const Vector& x, const AglgpModel& model, double y_gmin,
                  const PenaltyState& penalty, const DesignArchive& archive) {
    auto [mean_g, var_g] = model.predict_global(x);
    const double ei = expected_improvement(mean_g, std::sqrt(std::max(var_g, 0.0)), y_gmin);
    return ei * penalty.factor_at(x, archive);
}

// --------------------------------------------------------------------------
// Inner maximizer: space-filling candidates plus coordinate pattern
// refinement of the best few. All-zero acquisition surfaces fall back to the
// candidate with the largest posterior variance.

struct MaximizeOptions {
    int candidates_per_dim = 256;
    int refine_top = 5;
    double refine_step_frac = 0.05;
    double min_step_frac = 1e-4;
    std::function<bool(const Vector&)> membership;   // optional domain restriction
    std::function<double(const Vector&)> variance;   // exploration fallback
    std::vector<Vector> extra_candidates;
};

inline std::pair<Vector, double> maximize_acquisition(
    const std::function<double(const Vector&)>& f, const Box& domain, RngStream& rng,
    const MaximizeOptions& opts = {}) {
    const int d = domain.dim();
    std::vector<Vector> cands = latin_hypercube(opts.candidates_per_dim * d, domain, rng);
    for (const auto& c : opts.extra_candidates) cands.push_back(domain.clip(c));
    if (opts.membership) {
        std::vector<Vector> kept;
        for (auto& c : cands)
            if (opts.membership(c)) kept.push_back(std::move(c));
        cands = std::move(kept);
    }
    if (cands.empty()) throw AcquisitionError("maximize_acquisition: empty candidate set");

    std::vector<std::pair<double, int>> scored(cands.size());
    for (int i = 0; i < static_cast<int>(cands.size()); ++i)
        scored[i] = {f(cands[i]), i};
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });

    if (!(scored.front().first > 0.0)) {
        // pure exploration fallback
        if (!opts.variance) return {cands[scored.front().second], scored.front().first};
        int best = scored.front().second;
        double best_v = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < static_cast<int>(cands.size()); ++i) {
            const double v = opts.variance(cands[i]);
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        return {cands[best], f(cands[best])};
    }

    auto neg = [&](const Vector& x) -> double {
        if (opts.membership && !opts.membership(x)) return std::numeric_limits<double>::infinity();
        return -f(x);
    };
    const double width = domain.width().maxCoeff();
    Vector best_x = cands[scored.front().second];
    double best_val = scored.front().first;
    const int top = std::min<int>(opts.refine_top, static_cast<int>(scored.size()));
    for (int t = 0; t < top; ++t) {
        if (!(scored[t].first > 0.0)) break;
        auto r = pattern_minimize(neg, domain, cands[scored[t].second],
                                  opts.refine_step_frac * width, opts.min_step_frac * width);
        if (-r.value > best_val) {
            best_val = -r.value;
            best_x = r.x;
        }
    }
    return {best_x, best_val};
}

// --------------------------------------------------------------------------
// Batch construction.

struct GlobalCandidateBatch {
    std::vector<Vector> points;
    std::vector<double> believer_values;
    std::map<int, int> region_counts;
    std::vector<std::pair<Vector, double>> artificial_counts;
};

namespace detail {

inline bool near_duplicate(const Vector& x, const std::vector<Vector>& chosen, double tol) {
    for (const auto& c : chosen)
        if ((x - c).norm() <= tol) return true;
    return false;
}

}  // namespace detail

// Sequential q-point global EI: greedy gEI maximization with kriging-believer
// updates; duplicated argmaxes are suppressed by adding the smallest
// artificial neighbor count that pushes their penalized value below the best
// competing alternative.
inline GlobalCandidateBatch propose_global_batch(const AglgpModel& model,
                                                 const DesignArchive& archive, int q,
                                                 PenaltyState& penalty, RngStream& rng) {
    if (q < 1) throw ConfigError("propose_global_batch: q must be >= 1");
    GlobalCandidateBatch batch;
    const double dup_tol = 1e-6 * model.domain().diameter();

    AglgpModel believer = model;
    for (int i = 0; i < q; ++i) {
        const double y_gmin = believer.global_min_at_inducing();
        bool accepted = false;
        for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
            MaximizeOptions mo;
            mo.variance = [&](const Vector& x) { return believer.predict_global(x).second; };
            auto [x_star, val] = maximize_acquisition(
                [&](const Vector& x) { return gei(x, believer, y_gmin, penalty, archive); },
                model.domain(), rng, mo);

            if (!detail::near_duplicate(x_star, batch.points, dup_tol)) {
                batch.points.push_back(x_star);
                const double yb = believer.predict(x_star).mean_overall;
                batch.believer_values.push_back(yb);
                believer = believer.with_believer(x_star, yb);
                accepted = true;
                break;
            }

            // competing best strictly away from the duplicate
            MaximizeOptions alt = mo;
            alt.membership = [&](const Vector& x) {
                return !detail::near_duplicate(x, batch.points, dup_tol) &&
                       (x - x_star).norm() > dup_tol;
            };
            double competing = 0.0;
            try {
                competing = maximize_acquisition(
                                [&](const Vector& x) {
                                    return gei(x, believer, y_gmin, penalty, archive);
                                },
                                model.domain(), rng, alt)
                                .second;
            } catch (const AcquisitionError&) {
                competing = 0.0;
            }

            auto [mean_g, var_g] = believer.predict_global(x_star);
            const double unpenalized =
                expected_improvement(mean_g, std::sqrt(std::max(var_g, 0.0)), y_gmin);
            const double n_a = penalty.neighbor_count(x_star, archive);
            double n_add;
            if (competing > 0.0 && unpenalized > competing) {
                n_add = std::ceil(penalty.v() * (5.0 + std::log(unpenalized / competing - 1.0)) -
                                  n_a);
            } else {
                n_add = std::ceil(10.0 * penalty.v());
            }
            penalty.add_artificial(x_star, std::max(n_add, 1.0));
        }
        if (!accepted)
            throw AcquisitionError("propose_global_batch: could not find a distinct point");
    }

    for (const auto& x : batch.points) {
        const int k = model.partition().assign(x);
        batch.region_counts[k] += 1;
    }
    batch.artificial_counts = penalty.artificial();
    return batch;
}

namespace detail {

// Greedy sequential mEI with believer updates, optionally restricted to one
// region. Already-selected starts are excluded by a small ball so the
// returned set is pairwise distinct even on flat surfaces.
inline std::vector<Vector> propose_mei_starts(const AglgpModel& model, int region, int count,
                                              double y_min, RngStream& rng) {
    const Box& domain = model.domain();
    const double dup_tol = 1e-6 * domain.diameter();
    std::vector<Vector> chosen;

    AglgpModel believer = model;
    for (int i = 0; i < count; ++i) {
        MaximizeOptions mo;
        mo.membership = [&](const Vector& x) {
            if (region >= 0 && model.partition().assign(x) != region) return false;
            return !near_duplicate(x, chosen, dup_tol);
        };
        mo.variance = [&](const Vector& x) { return believer.predict(x).var_z; };
        if (region >= 0) {
            mo.extra_candidates.push_back(model.partition().centroid(region));
            for (auto& loc : model.region_locations(region))
                mo.extra_candidates.push_back(loc);
        }

        auto [x_star, val] = maximize_acquisition(
            [&](const Vector& x) { return mei(believer.predict(x), y_min); }, domain, rng,
            mo);
        chosen.push_back(x_star);
        believer = believer.with_believer(x_star, believer.predict(x_star).mean_overall);
    }
    return chosen;
}

}  // namespace detail

// q_k pairwise-distinct starting points inside region k, chosen greedily by
// mEI against the region's best sample mean.
inline std::vector<Vector> propose_local_starts(const AglgpModel& model, int region,
                                                int q_k, double y_min_k, RngStream& rng) {
    if (q_k < 1) throw ConfigError("propose_local_starts: q_k must be >= 1");
    if (model.region_size(region) == 0)
        throw DomainError("propose_local_starts: region has no design points");
    return detail::propose_mei_starts(model, region, q_k, y_min_k, rng);
}

// Domain-wide one-shot q-mEI batch, used to initialize multistart baselines.
inline std::vector<Vector> propose_mei_batch(const AglgpModel& model, int q, double y_min,
                                             RngStream& rng) {
    if (q < 1) throw ConfigError("propose_mei_batch: q must be >= 1");
    return detail::propose_mei_starts(model, -1, q, y_min, rng);
}

}  // namespace pglo
