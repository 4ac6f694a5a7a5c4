#pragma once

#include "pglo/core.hpp"
#include "pglo/rng.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace pglo {

// A benchmark objective in the framework's minimization convention, with
// analytic heteroscedastic noise and known ground truth. user_sign maps the
// internal (minimized) value back to the user-facing one for problems stated
// as maximizations.
struct Problem {
    std::string name;
    Box box;
    std::function<double(const Vector&)> true_f;    // internal, minimized
    std::function<double(const Vector&)> noise_sd;  // per-observation sd
    Vector optimum;
    double f_star = 0.0;       // internal optimum value
    double user_sign = 1.0;    // user value = user_sign * internal value
    double range = 0.0;        // spread of true_f over the box
    double latency_seconds = 0.0;

    double user_value(double internal) const { return user_sign * internal; }
    double user_f_star() const { return user_sign * f_star; }

    // 1% relative error when f* != 0, else 1% of the range.
    bool success(double internal_value, double rel_tol = 0.01) const {
        const double err = std::abs(f_star - internal_value);
        if (std::abs(f_star) > 0.0) return err / std::abs(f_star) < rel_tol;
        return err < rel_tol * range;
    }
};

// 2-D multimodal test surface with 25 local optima; stated as a
// maximization with optimum 20 at (90, 90).
inline double sun_function(double x1, double x2) {
    if (x1 < 0.0 || x1 > 100.0 || x2 < 0.0 || x2 > 100.0)
        throw DomainError("sun_function: inputs must lie in [0, 100]^2");
    auto term = [](double x) {
        const double s = std::sin(0.05 * M_PI * x);
        const double u = (x - 90.0) / 50.0;
        return 10.0 * std::pow(s, 6) / std::pow(2.0, u * u);
    };
    return term(x1) + term(x2);
}

namespace detail {

inline double grid_range(const std::function<double(const Vector&)>& f, const Box& box,
                         int per_dim = 201) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    const int d = box.dim();
    if (d == 1) {
        Vector x(1);
        for (int i = 0; i < per_dim; ++i) {
            x[0] = box.lower()[0] + box.width()[0] * i / (per_dim - 1);
            const double v = f(x);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    } else if (d == 2) {
        Vector x(2);
        for (int i = 0; i < per_dim; ++i)
            for (int j = 0; j < per_dim; ++j) {
                x[0] = box.lower()[0] + box.width()[0] * i / (per_dim - 1);
                x[1] = box.lower()[1] + box.width()[1] * j / (per_dim - 1);
                const double v = f(x);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    } else {
        RngStream rng(1234567, "range-probe");
        const int samples = per_dim * per_dim;
        for (int i = 0; i < samples; ++i) {
            Vector x(d);
            for (int j = 0; j < d; ++j)
                x[j] = box.lower()[j] + box.width()[j] * rng.uniform();
            const double v = f(x);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    return hi - lo;
}

}  // namespace detail

// Eq.-style benchmark: maximize sun_function over [0, 100]^2 with noise
// variance 3 (1 + x1/100)^2 (1 + x2/100)^2. Minimized internally as -f.
inline Problem make_sun_problem() {
    Problem p;
    p.name = "sun";
    p.box = Box(Vector::Zero(2), Vector::Constant(2, 100.0));
    p.true_f = [](const Vector& x) { return -sun_function(x[0], x[1]); };
    p.noise_sd = [](const Vector& x) {
        const double v = 3.0 * std::pow(1.0 + x[0] / 100.0, 2) * std::pow(1.0 + x[1] / 100.0, 2);
        return std::sqrt(v);
    };
    p.optimum = Vector::Constant(2, 90.0);
    p.f_star = -20.0;
    p.user_sign = -1.0;
    p.range = detail::grid_range(p.true_f, p.box);
    return p;
}

// Standard-literature forms of the four named multimodal functions on their
// usual boxes, with constant noise sd calibrated to a percentage of the
// function's range over the box.
inline Problem standard_suite(const std::string& name, int d, double noise_pct = 0.01) {
    if (d < 1) throw ConfigError("standard_suite: dimension must be >= 1");
    Problem p;
    p.name = name;
    if (name == "griewank") {
        p.box = Box(Vector::Constant(d, -600.0), Vector::Constant(d, 600.0));
        p.true_f = [](const Vector& x) {
            double s = 0.0, prod = 1.0;
            for (int i = 0; i < x.size(); ++i) {
                s += x[i] * x[i] / 4000.0;
                prod *= std::cos(x[i] / std::sqrt(i + 1.0));
            }
            return s - prod + 1.0;
        };
        p.optimum = Vector::Zero(d);
        p.f_star = 0.0;
    } else if (name == "ackley") {
        p.box = Box(Vector::Constant(d, -32.768), Vector::Constant(d, 32.768));
        p.true_f = [d](const Vector& x) {
            const double a = 20.0, b = 0.2, c = 2.0 * M_PI;
            double s1 = 0.0, s2 = 0.0;
            for (int i = 0; i < d; ++i) {
                s1 += x[i] * x[i];
                s2 += std::cos(c * x[i]);
            }
            return -a * std::exp(-b * std::sqrt(s1 / d)) - std::exp(s2 / d) + a + std::exp(1.0);
        };
        p.optimum = Vector::Zero(d);
        p.f_star = 0.0;
    } else if (name == "levy") {
        p.box = Box(Vector::Constant(d, -10.0), Vector::Constant(d, 10.0));
        p.true_f = [d](const Vector& x) {
            auto w = [&](int i) { return 1.0 + (x[i] - 1.0) / 4.0; };
            double s = std::pow(std::sin(M_PI * w(0)), 2);
            for (int i = 0; i < d - 1; ++i) {
                const double wi = w(i);
                s += (wi - 1.0) * (wi - 1.0) *
                     (1.0 + 10.0 * std::pow(std::sin(M_PI * wi + 1.0), 2));
            }
            const double wd = w(d - 1);
            s += (wd - 1.0) * (wd - 1.0) * (1.0 + std::pow(std::sin(2.0 * M_PI * wd), 2));
            return s;
        };
        p.optimum = Vector::Ones(d);
        p.f_star = 0.0;
    } else if (name == "schwefel") {
        p.box = Box(Vector::Constant(d, -500.0), Vector::Constant(d, 500.0));
        p.true_f = [d](const Vector& x) {
            double s = 0.0;
            for (int i = 0; i < d; ++i) s += x[i] * std::sin(std::sqrt(std::abs(x[i])));
            return 418.9829 * d - s;
        };
        p.optimum = Vector::Constant(d, 420.9687);
        p.f_star = 0.0;
    } else {
        throw ConfigError("standard_suite: unknown problem '" + name + "'");
    }
    p.range = detail::grid_range(p.true_f, p.box);
    const double sd = noise_pct * p.range;
    p.noise_sd = [sd](const Vector&) { return sd; };
    return p;
}

inline Problem make_problem(const std::string& name, int d = 2, double noise_pct = 0.01) {
    if (name == "sun") return make_sun_problem();
    return standard_suite(name, d, noise_pct);
}

inline std::vector<std::string> problem_names() {
    return {"sun", "griewank", "ackley", "levy", "schwefel"};
}

// One noisy observation; the optional per-evaluation latency mimics a slow
// simulation run.
inline double evaluate_noisy(const Problem& problem, const Vector& x, RngStream& rng) {
    if (!problem.box.contains(x, 1e-9 * problem.box.diameter()))
        throw DomainError("evaluate_noisy: point outside the problem box");
    const double y = problem.true_f(problem.box.clip(x)) +
                     problem.noise_sd(x) * rng.normal();
    if (problem.latency_seconds > 0.0)
        std::this_thread::sleep_for(std::chrono::duration<double>(problem.latency_seconds));
    return y;
}

}  // namespace pglo
