#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace pglo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// --------------------------------------------------------------------------
// Errors. The CLI maps these onto exit codes.

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelFitError : std::runtime_error {
    ModelFitError(const std::string& what, int region)
        : std::runtime_error(what), region_id(region) {}
    int region_id;  // -1 for the global model
};

struct AcquisitionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------------------------------------------------------
// Axis-aligned box domain.

class Box {
public:
    Box() = default;
    Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
        if (lower_.size() != upper_.size())
            throw ConfigError("box bounds have mismatched dimensions");
        for (Eigen::Index i = 0; i < lower_.size(); ++i)
            if (!(lower_[i] < upper_[i]))
                throw ConfigError("box lower bound must be strictly below upper bound");
    }

    int dim() const { return static_cast<int>(lower_.size()); }
    const Vector& lower() const { return lower_; }
    const Vector& upper() const { return upper_; }
    Vector width() const { return upper_ - lower_; }

    double diameter() const { return (upper_ - lower_).norm(); }

    bool contains(const Vector& x, double tol = 0.0) const {
        if (x.size() != lower_.size()) return false;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
        return true;
    }

    Vector clip(Vector x) const {
        for (Eigen::Index i = 0; i < x.size(); ++i)
            x[i] = std::min(std::max(x[i], lower_[i]), upper_[i]);
        return x;
    }

    // Map to/from the unit cube. All model internals work in unit coordinates.
    Vector to_unit(const Vector& x) const {
        return (x - lower_).cwiseQuotient(upper_ - lower_);
    }
    Vector from_unit(const Vector& u) const {
        return lower_ + u.cwiseProduct(upper_ - lower_);
    }

private:
    Vector lower_, upper_;
};

// --------------------------------------------------------------------------
// Scalar helpers.

inline double norm_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

inline double norm_cdf(double z) {
    return 0.5 * std::erfc(-z * M_SQRT1_2);
}

// Closed-form E[(ymin - Z)^+] for Z ~ N(mu, s^2). Degenerates to the hinge
// when s = 0.
inline double expected_improvement(double mu, double s, double ymin) {
    if (!(s > 0.0)) return std::max(ymin - mu, 0.0);
    const double u = (ymin - mu) / s;
    return s * norm_pdf(u) + (ymin - mu) * norm_cdf(u);
}

inline std::string format_double(double v, const char* fmt = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), fmt, v);
    return buf;
}

}  // namespace pglo
