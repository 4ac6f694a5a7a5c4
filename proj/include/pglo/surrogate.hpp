#pragma once

#include "pglo/archive.hpp"
#include "pglo/core.hpp"
#include "pglo/direct_search.hpp"
#include "pglo/kmeans.hpp"
#include "pglo/lhs.hpp"
#include "pglo/partition.hpp"
#include "pglo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <vector>

namespace pglo {

// exp(-sum_j sens_j (x1_j - x2_j)^2): the squared-exponential correlation,
// parameterized by per-dimension sensitivities (larger = faster decay).
inline double gaussian_correlation(const Vector& x1, const Vector& x2,
                                   const Vector& sensitivity) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < x1.size(); ++j) {
        const double d = x1[j] - x2[j];
        s += sensitivity[j] * d * d;
    }
    return std::exp(-s);
}

namespace detail {

inline Matrix correlation_matrix(const Matrix& A, const Matrix& B, const Vector& sens) {
    Matrix C(A.rows(), B.rows());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < B.rows(); ++j) {
            double s = 0.0;
            for (Eigen::Index l = 0; l < A.cols(); ++l) {
                const double d = A(i, l) - B(j, l);
                s += sens[l] * d * d;
            }
            C(i, j) = std::exp(-s);
        }
    return C;
}

// Cholesky with adaptive diagonal jitter: start at 1e-10 * trace/n and
// escalate tenfold up to 1e-4 * trace/n.
inline std::optional<Eigen::LLT<Matrix>> jittered_llt(const Matrix& M) {
    const double scale = std::max(M.trace() / std::max<double>(1, M.rows()), 1e-300);
    Eigen::LLT<Matrix> llt(M);
    if (llt.info() == Eigen::Success) return llt;
    for (double j = 1e-10 * scale; j <= 1e-4 * scale * (1.0 + 1e-12); j *= 10.0) {
        Matrix Mj = M;
        Mj.diagonal().array() += j;
        llt.compute(Mj);
        if (llt.info() == Eigen::Success) return llt;
    }
    return std::nullopt;
}

inline double log_det_from_llt(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

// --------------------------------------------------------------------------
// Hyperparameters. All values refer to unit-box inputs and standardized
// responses.

struct GlobalHyper {
    double mu = 0.0;
    double sigma2 = 1.0;
    Vector theta;
};

struct LocalHyper {
    double tau2 = 1.0;
    Vector alpha;
};

struct AglgpHyper {
    GlobalHyper global;
    std::vector<LocalHyper> locals;
};

struct FitOptions {
    int starts = 5;
    int max_evals_per_start = 240;
    double noise_floor = 1e-8;       // per-observation variance floor, raw units
    double sens_lo = 1e-3;           // sensitivity bounds per normalized unit
    double sens_hi = 1e3;
    double var_lo = 1e-6;            // variance bounds, units of var(y_std)
    double var_hi = 1e3;
    // Exact per-observation noise variances (raw units), when the problem's
    // noise is analytic. Empty = use archive sample variances.
    std::vector<double> noise_override;
    // Warm-start hyperparameters from a previous fit, tried as an extra start.
    std::optional<AglgpHyper> warm_start;
};

struct Prediction {
    double mean_global = 0.0;
    double var_global = 0.0;
    double mean_local = 0.0;
    double var_local = 0.0;
    double mean_overall = 0.0;
    double var_z = 0.0;
    double mean_bounded = 0.0;
};

struct LoocvDiagnostics {
    double rmse = 0.0;
    double frac_std_within_3 = 1.0;
    int n = 0;
};

// --------------------------------------------------------------------------
// Fitted AGLGP model: deterministic global GP over m inducing points plus
// independent per-region residual GPs, under heteroscedastic noise on the
// sample means. Immutable after construction; believer extensions and
// local-only refits return modified copies.

class AglgpModel {
public:
    // --- queries -----------------------------------------------------------

    Prediction predict(const Vector& x_raw) const {
        if (!domain_.contains(x_raw, 1e-9 * domain_.diameter()))
            throw DomainError("predict: location outside the domain box");
        const Vector xu = domain_.to_unit(domain_.clip(x_raw));
        const int k = partition_.assign(x_raw);

        auto [mg, vg] = predict_global_unit(xu);
        auto [ml, vl, vz] = predict_local_unit(xu, k);

        Prediction p;
        p.mean_global = y_mean_ + y_scale_ * mg;
        p.var_global = y_scale_ * y_scale_ * vg;
        p.mean_local = y_scale_ * ml;
        p.var_local = y_scale_ * y_scale_ * vl;
        p.mean_overall = p.mean_global + p.mean_local;
        p.var_z = y_scale_ * y_scale_ * vz;
        p.mean_bounded = std::clamp(p.mean_overall, bound_lo_, bound_hi_);
        return p;
    }

    // Global-trend mean and variance only (raw units), Eqs. for the sparse
    // global predictor.
    std::pair<double, double> predict_global(const Vector& x_raw) const {
        const Vector xu = domain_.to_unit(domain_.clip(x_raw));
        auto [m, v] = predict_global_unit(xu);
        return {y_mean_ + y_scale_ * m, y_scale_ * y_scale_ * v};
    }

    // Best global-model value over the inducing points.
    double global_min_at_inducing() const {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < Xg_.rows(); ++i) {
            auto [m, v] = predict_global_unit(Xg_.row(i).transpose());
            best = std::min(best, y_mean_ + y_scale_ * m);
        }
        return best;
    }

    const Box& domain() const { return domain_; }
    const RegionPartition& partition() const { return partition_; }
    const AglgpHyper& hyper() const { return hyper_; }
    int num_inducing() const { return static_cast<int>(Xg_.rows()); }
    int num_data() const { return static_cast<int>(Xn_.rows()); }
    double y_mean() const { return y_mean_; }
    double y_scale() const { return y_scale_; }
    double bound_lo() const { return bound_lo_; }
    double bound_hi() const { return bound_hi_; }
    double noise_floor() const { return noise_floor_; }

    std::vector<Vector> inducing_points() const {
        std::vector<Vector> out;
        for (Eigen::Index i = 0; i < Xg_.rows(); ++i)
            out.push_back(domain_.from_unit(Xg_.row(i).transpose()));
        return out;
    }

    // Q_m = G_m + G_mn (Lambda + Sigma_eps)^{-1} G_nm, for spectrum checks.
    const Matrix& qm() const { return Qm_; }

    int region_size(int k) const { return static_cast<int>(locals_[k].X.rows()); }
    double region_tau2_raw(int k) const {
        return hyper_.locals[k].tau2 * y_scale_ * y_scale_;
    }
    std::vector<Vector> region_locations(int k) const {
        std::vector<Vector> out;
        for (Eigen::Index i = 0; i < locals_[k].X.rows(); ++i)
            out.push_back(domain_.from_unit(locals_[k].X.row(i).transpose()));
        return out;
    }

    // --- derived copies -----------------------------------------------------

    // Fold a believer pseudo-observation (raw units) into both the global
    // conditioning set and its region's residual data.
    AglgpModel with_believer(const Vector& x_raw, double value_raw) const {
        AglgpModel m = *this;
        const Vector xu = domain_.to_unit(domain_.clip(x_raw));
        const int k = partition_.assign(x_raw);
        const double ys = (value_raw - y_mean_) / y_scale_;
        const double pseudo_noise = 1e-8 * hyper_.locals[k].tau2;

        // extend the global data set; the inducing set is unchanged, so
        // existing Lambda entries stay valid
        const int n = static_cast<int>(m.Xn_.rows());
        m.Xn_.conservativeResize(n + 1, Eigen::NoChange);
        m.Xn_.row(n) = xu.transpose();
        Vector g = hyper_.global.sigma2 *
                   detail::correlation_matrix(Matrix(xu.transpose()), Xg_, hyper_.global.theta)
                       .row(0)
                       .transpose();
        m.Gmn_.conservativeResize(Eigen::NoChange, n + 1);
        m.Gmn_.col(n) = g;
        const Vector w = chol_Gm_.matrixL().solve(g);
        const double lambda_new = std::max(hyper_.global.sigma2 - w.squaredNorm(), 0.0);
        m.D_.conservativeResize(n + 1);
        m.D_[n] = lambda_new + pseudo_noise;
        m.y_.conservativeResize(n + 1);
        m.y_[n] = ys;
        m.rebuild_global_conditioning();

        // extend region k and refresh every region's residual solve vector
        auto& blk = m.locals_[k];
        const int nk = static_cast<int>(blk.X.rows());
        blk.X.conservativeResize(nk + 1, Eigen::NoChange);
        blk.X.row(nk) = xu.transpose();
        blk.y.conservativeResize(nk + 1);
        blk.y[nk] = ys;
        blk.eps.conservativeResize(nk + 1);
        blk.eps[nk] = pseudo_noise;
        m.factor_local(k);
        for (int j = 0; j < static_cast<int>(m.locals_.size()); ++j) m.refresh_local_solve(j);
        return m;
    }

    // Step-4a refresh: re-estimate and rebuild the residual models of the
    // given regions against the current archive, keeping the global block
    // (hyperparameters, inducing set, conditioning) frozen.
    AglgpModel refit_locals(const DesignArchive& archive, const std::vector<int>& regions,
                            const FitOptions& opts, RngStream& rng) const {
        AglgpModel m = *this;
        auto members = partition_.members(archive);
        for (int k : regions) {
            m.load_region_from_archive(archive, k, members[k], opts);
            LocalHyper h = estimate_local(m.locals_[k].y, m.locals_[k].eps, m.locals_[k].X,
                                          opts, rng, k, hyper_.locals[k]);
            m.hyper_.locals[k] = h;
            m.factor_local(k);
            m.refresh_local_solve(k);
        }
        return m;
    }

    LoocvDiagnostics loocv() const;

    friend AglgpModel build_model(const DesignArchive&, const RegionPartition&,
                                  const std::vector<Vector>&, const AglgpHyper&,
                                  const FitOptions&);
    friend AglgpModel fit(const DesignArchive&, const RegionPartition&, int,
                          const FitOptions&, RngStream&);

private:
    struct LocalBlock {
        Matrix X;    // member locations, unit coords
        Vector y;    // standardized responses at members
        Vector eps;  // sample-mean noise variances, standardized
        Vector res;  // residuals y - yhat_g
        Vector a;    // (L + Sigma_eps)^{-1} res
        Eigen::LLT<Matrix> chol_LpE;
        Eigen::LLT<Matrix> chol_L;
    };

    std::pair<double, double> predict_global_unit(const Vector& xu) const {
        Vector g(Xg_.rows());
        for (Eigen::Index i = 0; i < Xg_.rows(); ++i)
            g[i] = hyper_.global.sigma2 *
                   gaussian_correlation(xu, Xg_.row(i).transpose(), hyper_.global.theta);
        const double mean = hyper_.global.mu + g.dot(u_);
        const Vector wg = chol_Gm_.matrixL().solve(g);
        const Vector wq = chol_Qm_.matrixL().solve(g);
        const double var = hyper_.global.sigma2 - wg.squaredNorm() + wq.squaredNorm();
        return {mean, std::max(var, 0.0)};
    }

    std::tuple<double, double, double> predict_local_unit(const Vector& xu, int k) const {
        const auto& blk = locals_[k];
        const double tau2 = hyper_.locals[k].tau2;
        if (blk.X.rows() == 0) return {0.0, tau2, tau2};
        Vector l(blk.X.rows());
        for (Eigen::Index i = 0; i < blk.X.rows(); ++i)
            l[i] = tau2 * gaussian_correlation(xu, blk.X.row(i).transpose(),
                                               hyper_.locals[k].alpha);
        const double mean = l.dot(blk.a);
        const Vector we = blk.chol_LpE.matrixL().solve(l);
        const double var_l = std::max(tau2 - we.squaredNorm(), 0.0);
        const Vector wz = blk.chol_L.matrixL().solve(l);
        const double var_z = std::max(tau2 - wz.squaredNorm(), 0.0);
        return {mean, var_l, var_z};
    }

    // Recompute Q_m, its factor, and the conditioning weights u from the
    // current (Xn, Gmn, D, y).
    void rebuild_global_conditioning() {
        const Vector dinv = D_.cwiseInverse();
        Qm_ = Gm_ + Gmn_ * dinv.asDiagonal() * Gmn_.transpose();
        auto llt = detail::jittered_llt(Qm_);
        if (!llt) throw ModelFitError("Q_m factorization failed", -1);
        chol_Qm_ = *llt;
        const Vector r = y_.array() - hyper_.global.mu;
        u_ = chol_Qm_.solve(Gmn_ * dinv.cwiseProduct(r));
    }

    void load_region_from_archive(const DesignArchive& archive, int k,
                                  const std::vector<int>& member_idx,
                                  const FitOptions& opts) {
        auto& blk = locals_[k];
        const int nk = static_cast<int>(member_idx.size());
        blk.X.resize(nk, domain_.dim());
        blk.y.resize(nk);
        blk.eps.resize(nk);
        for (int i = 0; i < nk; ++i) {
            const auto& p = archive.point(member_idx[i]);
            blk.X.row(i) = domain_.to_unit(p.location).transpose();
            blk.y[i] = (p.sample_mean - y_mean_) / y_scale_;
            const double raw_var = opts.noise_override.empty()
                                       ? p.sample_variance
                                       : opts.noise_override[member_idx[i]];
            blk.eps[i] = std::max(raw_var, opts.noise_floor) /
                         static_cast<double>(p.replications) / (y_scale_ * y_scale_);
        }
    }

    void factor_local(int k) {
        auto& blk = locals_[k];
        const int nk = static_cast<int>(blk.X.rows());
        if (nk == 0) return;
        const double tau2 = hyper_.locals[k].tau2;
        Matrix L = tau2 * detail::correlation_matrix(blk.X, blk.X, hyper_.locals[k].alpha);
        Matrix LpE = L;
        LpE.diagonal() += blk.eps;
        auto llt1 = detail::jittered_llt(LpE);
        auto llt2 = detail::jittered_llt(L);
        if (!llt1 || !llt2)
            throw ModelFitError("local covariance factorization failed", k);
        blk.chol_LpE = *llt1;
        blk.chol_L = *llt2;
    }

    // Residuals against the (possibly stale) global trend, then the cached
    // solve vector a = (L + Sigma_eps)^{-1} res.
    void refresh_local_solve(int k) {
        auto& blk = locals_[k];
        const int nk = static_cast<int>(blk.X.rows());
        if (nk == 0) return;
        blk.res.resize(nk);
        for (int i = 0; i < nk; ++i) {
            auto [mg, vg] = predict_global_unit(blk.X.row(i).transpose());
            blk.res[i] = blk.y[i] - mg;
        }
        blk.a = blk.chol_LpE.solve(blk.res);
    }

    static LocalHyper estimate_local(const Vector& y, const Vector& eps, const Matrix& X,
                                     const FitOptions& opts, RngStream& rng, int region_id,
                                     std::optional<LocalHyper> warm = std::nullopt);

    Box domain_;
    RegionPartition partition_;
    AglgpHyper hyper_;
    double y_mean_ = 0.0, y_scale_ = 1.0;
    double bound_lo_ = 0.0, bound_hi_ = 0.0;
    double noise_floor_ = 1e-8;

    Matrix Xg_;   // inducing locations, unit coords
    Matrix Xn_;   // global data locations, unit coords
    Matrix Gm_;   // sigma^2 corr(Xg, Xg)
    Matrix Gmn_;  // sigma^2 corr(Xg, Xn)
    Matrix Qm_;
    Vector D_;    // Lambda + Sigma_eps
    Vector y_;    // standardized responses
    Vector u_;    // Q_m^{-1} G_mn D^{-1} (y - mu)
    Eigen::LLT<Matrix> chol_Gm_;
    Eigen::LLT<Matrix> chol_Qm_;

    std::vector<LocalBlock> locals_;
};

// --------------------------------------------------------------------------
// Inducing-point selection: k-means centers of the archive snapped onto
// distinct design points.

inline std::vector<Vector> select_inducing_points(const DesignArchive& archive, int m,
                                                  RngStream& rng) {
    const int n = archive.total_points();
    if (m > n) throw ConfigError("select_inducing_points: m exceeds the design size");
    if (m < 1) throw ConfigError("select_inducing_points: m must be >= 1");

    auto locs = archive.locations();
    if (m == n) return locs;

    auto km = kmeans(locs, m, rng);
    std::vector<bool> used(n, false);
    std::vector<Vector> out;
    out.reserve(m);
    for (const auto& c : km.centroids) {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (used[i]) continue;
            const double dd = (locs[i] - c).squaredNorm();
            if (dd < best_d) {
                best_d = dd;
                best = i;
            }
        }
        used[best] = true;
        out.push_back(locs[best]);
    }
    return out;
}

namespace detail {

struct GlobalLikelihood {
    const Matrix& Xn;
    const Matrix& Xg;
    const Vector& y;
    const Vector& eps;

    // Negative log marginal likelihood of the sparse global model with a
    // FITC-style diagonal correction; mu is profiled out by GLS. Returns the
    // nll and the profiled mean.
    std::pair<double, double> operator()(double sigma2, const Vector& theta) const {
        const int n = static_cast<int>(Xn.rows());
        Matrix Gm = sigma2 * correlation_matrix(Xg, Xg, theta);
        auto chol_Gm = jittered_llt(Gm);
        if (!chol_Gm) return {std::numeric_limits<double>::infinity(), 0.0};
        Matrix Gmn = sigma2 * correlation_matrix(Xg, Xn, theta);

        Matrix W = chol_Gm->matrixL().solve(Gmn);
        Vector D(n);
        for (int i = 0; i < n; ++i)
            D[i] = std::max(sigma2 - W.col(i).squaredNorm(), 0.0) + eps[i];

        const Vector dinv = D.cwiseInverse();
        Matrix Qm = Gm + Gmn * dinv.asDiagonal() * Gmn.transpose();
        auto chol_Qm = jittered_llt(Qm);
        if (!chol_Qm) return {std::numeric_limits<double>::infinity(), 0.0};

        auto sigma_inv = [&](const Vector& v) -> Vector {
            const Vector dv = dinv.cwiseProduct(v);
            return dv - dinv.cwiseProduct(Gmn.transpose() * chol_Qm->solve(Gmn * dv));
        };
        const Vector ones = Vector::Ones(n);
        const Vector si_one = sigma_inv(ones);
        const Vector si_y = sigma_inv(y);
        const double denom = ones.dot(si_one);
        const double mu = denom > 0 ? ones.dot(si_y) / denom : 0.0;

        const Vector r = y.array() - mu;
        const double quad = r.dot(sigma_inv(r));
        const double logdet = log_det_from_llt(*chol_Qm) - log_det_from_llt(*chol_Gm) +
                              D.array().log().sum();
        const double nll = 0.5 * (quad + logdet + n * std::log(2.0 * M_PI));
        return {std::isfinite(nll) ? nll : std::numeric_limits<double>::infinity(), mu};
    }
};

// Multistart bounded pattern search over log-parameters.
inline Vector multistart_minimize(const std::function<double(const Vector&)>& f,
                                  const Box& log_box, int starts, int max_evals,
                                  RngStream& rng,
                                  const std::vector<Vector>& extra_starts = {}) {
    std::vector<Vector> start_pts = latin_hypercube(starts, log_box, rng);
    for (const auto& s : extra_starts) start_pts.push_back(log_box.clip(s));
    Vector best;
    double best_val = std::numeric_limits<double>::infinity();
    const double mesh0 = 0.2 * log_box.width().maxCoeff();
    const double mesh_min = 1e-2;
    for (const auto& s : start_pts) {
        auto r = pattern_minimize(f, log_box, s, mesh0, mesh_min, max_evals);
        if (r.value < best_val) {
            best_val = r.value;
            best = r.x;
        }
    }
    if (!std::isfinite(best_val))
        throw ModelFitError("hyperparameter likelihood is non-finite everywhere", -1);
    return best;
}

}  // namespace detail

inline LocalHyper AglgpModel::estimate_local(const Vector& y, const Vector& eps,
                                             const Matrix& X, const FitOptions& opts,
                                             RngStream& rng, int region_id,
                                             std::optional<LocalHyper> warm) {
    const int d = static_cast<int>(X.cols());
    LocalHyper h;
    h.alpha = Vector::Ones(d);
    if (X.rows() == 0) {
        h.tau2 = opts.var_lo;
        return h;
    }

    auto nll = [&](double tau2, const Vector& alpha) -> double {
        Matrix A = tau2 * detail::correlation_matrix(X, X, alpha);
        A.diagonal() += eps;
        auto llt = detail::jittered_llt(A);
        if (!llt) return std::numeric_limits<double>::infinity();
        const double quad = y.dot(llt->solve(y));
        const double v =
            0.5 * (quad + detail::log_det_from_llt(*llt) + X.rows() * std::log(2.0 * M_PI));
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    };

    Vector lo(d + 1), hi(d + 1);
    lo[0] = std::log(opts.var_lo);
    hi[0] = std::log(opts.var_hi);
    for (int j = 0; j < d; ++j) {
        lo[j + 1] = std::log(opts.sens_lo);
        hi[j + 1] = std::log(opts.sens_hi);
    }
    Box log_box(lo, hi);

    auto unpack = [&](const Vector& p, double& tau2, Vector& alpha) {
        tau2 = std::exp(p[0]);
        alpha.resize(d);
        for (int j = 0; j < d; ++j) alpha[j] = std::exp(p[j + 1]);
    };
    auto f = [&](const Vector& p) {
        double tau2;
        Vector alpha;
        unpack(p, tau2, alpha);
        return nll(tau2, alpha);
    };

    std::vector<Vector> extra;
    if (warm) {
        Vector w(d + 1);
        w[0] = std::log(warm->tau2);
        for (int j = 0; j < d; ++j) w[j + 1] = std::log(warm->alpha[j]);
        extra.push_back(w);
    }
    try {
        const Vector best = detail::multistart_minimize(f, log_box, opts.starts,
                                                        opts.max_evals_per_start, rng, extra);
        unpack(best, h.tau2, h.alpha);
    } catch (const ModelFitError& e) {
        throw ModelFitError(e.what(), region_id);
    }
    return h;
}

// Assemble a model from given hyperparameters (no estimation): shared by
// fit(), snapshot loading, and the brute-force oracle tests.
inline AglgpModel build_model(const DesignArchive& archive, const RegionPartition& partition,
                              const std::vector<Vector>& inducing_raw,
                              const AglgpHyper& hyper, const FitOptions& opts) {
    const int n = archive.total_points();
    const int m = static_cast<int>(inducing_raw.size());
    const int d = archive.domain().dim();
    if (n == 0) throw ConfigError("build_model: empty archive");
    if (static_cast<int>(hyper.locals.size()) != partition.num_regions())
        throw ConfigError("build_model: one local hyperparameter set per region required");

    AglgpModel mod;
    mod.domain_ = archive.domain();
    mod.partition_ = partition;
    mod.hyper_ = hyper;
    mod.noise_floor_ = opts.noise_floor;

    // standardization and predictor bounds from the raw sample means
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (const auto& p : archive.points()) {
        mean += p.sample_mean;
        ymin = std::min(ymin, p.sample_mean);
        ymax = std::max(ymax, p.sample_mean);
    }
    mean /= n;
    double var = 0.0;
    for (const auto& p : archive.points()) {
        const double dlt = p.sample_mean - mean;
        var += dlt * dlt;
    }
    var = n > 1 ? var / (n - 1) : 0.0;
    mod.y_mean_ = mean;
    mod.y_scale_ = var > 1e-300 ? std::sqrt(var) : 1.0;
    const double range = ymax - ymin;
    mod.bound_lo_ = ymin - 3.0 * range;
    mod.bound_hi_ = ymax + 3.0 * range;

    mod.Xn_.resize(n, d);
    mod.y_.resize(n);
    Vector eps(n);
    for (int i = 0; i < n; ++i) {
        const auto& p = archive.point(i);
        mod.Xn_.row(i) = mod.domain_.to_unit(p.location).transpose();
        mod.y_[i] = (p.sample_mean - mod.y_mean_) / mod.y_scale_;
        const double raw_var =
            opts.noise_override.empty() ? p.sample_variance : opts.noise_override[i];
        eps[i] = std::max(raw_var, opts.noise_floor) /
                 static_cast<double>(p.replications) / (mod.y_scale_ * mod.y_scale_);
    }

    mod.Xg_.resize(m, d);
    for (int i = 0; i < m; ++i)
        mod.Xg_.row(i) = mod.domain_.to_unit(inducing_raw[i]).transpose();

    mod.Gm_ = hyper.global.sigma2 *
              detail::correlation_matrix(mod.Xg_, mod.Xg_, hyper.global.theta);
    auto chol_Gm = detail::jittered_llt(mod.Gm_);
    if (!chol_Gm) throw ModelFitError("G_m factorization failed", -1);
    mod.chol_Gm_ = *chol_Gm;
    mod.Gmn_ = hyper.global.sigma2 *
               detail::correlation_matrix(mod.Xg_, mod.Xn_, hyper.global.theta);

    Matrix W = mod.chol_Gm_.matrixL().solve(mod.Gmn_);
    mod.D_.resize(n);
    for (int i = 0; i < n; ++i)
        mod.D_[i] = std::max(hyper.global.sigma2 - W.col(i).squaredNorm(), 0.0) + eps[i];
    mod.rebuild_global_conditioning();

    auto members = partition.members(archive);
    mod.locals_.resize(partition.num_regions());
    FitOptions local_opts = opts;
    for (int k = 0; k < partition.num_regions(); ++k) {
        mod.load_region_from_archive(archive, k, members[k], local_opts);
        mod.factor_local(k);
        mod.refresh_local_solve(k);
    }
    return mod;
}

// Full maximum-likelihood fit: global hyperparameters first, then each
// region's residual model.
inline AglgpModel fit(const DesignArchive& archive, const RegionPartition& partition, int m,
                      const FitOptions& opts, RngStream& rng) {
    const int n = archive.total_points();
    const int d = archive.domain().dim();
    if (m > n) throw ConfigError("fit: m exceeds the number of design points");
    if (m < partition.num_regions()) throw ConfigError("fit: m must be >= K");

    RngStream inducing_rng = rng.substream("inducing");
    auto inducing = select_inducing_points(archive, m, inducing_rng);

    // standardized responses and noises, mirroring build_model
    double mean = 0.0;
    for (const auto& p : archive.points()) mean += p.sample_mean;
    mean /= n;
    double var = 0.0;
    for (const auto& p : archive.points()) {
        const double dlt = p.sample_mean - mean;
        var += dlt * dlt;
    }
    var = n > 1 ? var / (n - 1) : 0.0;
    const double scale = var > 1e-300 ? std::sqrt(var) : 1.0;

    Matrix Xn(n, d), Xg(m, d);
    Vector y(n), eps(n);
    for (int i = 0; i < n; ++i) {
        const auto& p = archive.point(i);
        Xn.row(i) = archive.domain().to_unit(p.location).transpose();
        y[i] = (p.sample_mean - mean) / scale;
        const double raw_var =
            opts.noise_override.empty() ? p.sample_variance : opts.noise_override[i];
        eps[i] = std::max(raw_var, opts.noise_floor) /
                 static_cast<double>(p.replications) / (scale * scale);
    }
    for (int i = 0; i < m; ++i)
        Xg.row(i) = archive.domain().to_unit(inducing[i]).transpose();

    detail::GlobalLikelihood lik{Xn, Xg, y, eps};

    Vector lo(d + 1), hi(d + 1);
    lo[0] = std::log(opts.var_lo);
    hi[0] = std::log(opts.var_hi);
    for (int j = 0; j < d; ++j) {
        lo[j + 1] = std::log(opts.sens_lo);
        hi[j + 1] = std::log(opts.sens_hi);
    }
    Box log_box(lo, hi);

    auto f = [&](const Vector& p) {
        Vector theta(d);
        for (int j = 0; j < d; ++j) theta[j] = std::exp(p[j + 1]);
        return lik(std::exp(p[0]), theta).first;
    };

    std::vector<Vector> extra;
    if (opts.warm_start) {
        Vector w(d + 1);
        w[0] = std::log(opts.warm_start->global.sigma2);
        for (int j = 0; j < d; ++j) w[j + 1] = std::log(opts.warm_start->global.theta[j]);
        extra.push_back(w);
    }
    RngStream grng = rng.substream("global");
    const Vector best =
        detail::multistart_minimize(f, log_box, opts.starts, opts.max_evals_per_start, grng,
                                    extra);

    AglgpHyper hyper;
    hyper.global.sigma2 = std::exp(best[0]);
    hyper.global.theta.resize(d);
    for (int j = 0; j < d; ++j) hyper.global.theta[j] = std::exp(best[j + 1]);
    hyper.global.mu = lik(hyper.global.sigma2, hyper.global.theta).second;

    // residuals for the per-region fits come from a provisional build with
    // placeholder local hyperparameters
    hyper.locals.assign(partition.num_regions(), LocalHyper{1.0, Vector::Ones(d)});
    AglgpModel provisional = build_model(archive, partition, inducing, hyper, opts);

    for (int k = 0; k < partition.num_regions(); ++k) {
        RngStream lrng = rng.substream("local", static_cast<std::uint64_t>(k));
        std::optional<LocalHyper> warm;
        if (opts.warm_start && k < static_cast<int>(opts.warm_start->locals.size()))
            warm = opts.warm_start->locals[k];
        hyper.locals[k] =
            AglgpModel::estimate_local(provisional.locals_[k].res, provisional.locals_[k].eps,
                                       provisional.locals_[k].X, opts, lrng, k, warm);
    }
    return build_model(archive, partition, inducing, hyper, opts);
}

// Refit-free leave-one-out over the local models: hold each point out of its
// region's residual data with hyperparameters and the global trend frozen.
inline LoocvDiagnostics AglgpModel::loocv() const {
    LoocvDiagnostics diag;
    double sse = 0.0;
    int within = 0, total = 0;
    for (const auto& blk : locals_) {
        const int nk = static_cast<int>(blk.X.rows());
        if (nk == 0) continue;
        Matrix Ainv = blk.chol_LpE.solve(Matrix::Identity(nk, nk));
        const Vector s = Ainv * blk.res;
        for (int i = 0; i < nk; ++i) {
            const double e = s[i] / Ainv(i, i);             // loo error, standardized
            const double z = s[i] / std::sqrt(Ainv(i, i));  // standardized residual
            sse += e * e;
            if (std::abs(z) <= 3.0) ++within;
            ++total;
        }
    }
    diag.n = total;
    diag.rmse = total > 0 ? y_scale_ * std::sqrt(sse / total) : 0.0;
    diag.frac_std_within_3 = total > 0 ? static_cast<double>(within) / total : 1.0;
    return diag;
}

inline LoocvDiagnostics loocv_validate(const AglgpModel& model, const DesignArchive& archive) {
    if (archive.total_points() < 3)
        throw ConfigError("loocv_validate: need at least 3 design points");
    return model.loocv();
}

}  // namespace pglo
