#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "floquet_kam/linalg.hpp"

namespace floquet_kam {

// φ(x) = (e^x − (e^x − 1)/x)/x, with a series branch near 0.
inline double phi(double x) {
    if (std::abs(x) <= 1e-4) {
        double term = 0.5, sum = 0.0, xp = 1.0, fact = 2.0;  // (k+1) x^k / (k+2)!
        for (int k = 0; k < 8; ++k) {
            term = (k + 1) * xp / fact;
            sum += term;
            xp *= x;
            fact *= (k + 3);
        }
        return sum;
    }
    const double ex = std::exp(x);
    return (ex - std::expm1(x) / x) / x;
}

namespace detail {
// Σ_{n≥N} n^{−α} by Euler–Maclaurin.
inline double zeta_tail(double alpha, double N) {
    const double f = std::pow(N, -alpha);
    const double f1 = -alpha * f / N;
    const double f3 = -alpha * (alpha + 1) * (alpha + 2) * f / (N * N * N);
    const double f5 = -alpha * (alpha + 1) * (alpha + 2) * (alpha + 3) * (alpha + 4) * f / std::pow(N, 5);
    return N * f / (alpha - 1) + f / 2 - f1 / 12 + f3 / 720 - f5 / 30240;
}
}  // namespace detail

inline double zeta(double alpha) {
    if (!(alpha > 1)) throw DivergenceError("zeta: alpha must exceed 1");
    constexpr int N = 64;
    double s = 0.0;
    for (int n = N - 1; n >= 1; --n) s += std::pow(static_cast<double>(n), -alpha);
    return s + detail::zeta_tail(alpha, N);
}

// Li_{−α}(z) = Σ_{k≥1} k^α z^k for 0 ≤ z < 1.
inline double polylog_neg(double alpha, double z) {
    if (!(z < 1.0) || z < 0.0) throw DivergenceError("polylog_neg: argument must lie in [0, 1)");
    if (alpha == 2.0) return z * (1 + z) / std::pow(1 - z, 3);
    if (alpha == 1.0) return z / ((1 - z) * (1 - z));
    if (alpha == 0.0) return z / (1 - z);
    double sum = 0.0;
    for (int k = 1; k < 1000000; ++k) {
        const double t = std::pow(static_cast<double>(k), alpha) * std::pow(z, k);
        sum += t;
        if (k > alpha / -std::log(z) && t < 1e-17 * sum) break;
    }
    return sum;
}

class Schedule {
public:
    Schedule(double alpha, double q, double r, double eps_V, int S_max)
        : alpha_(alpha), q_(q), r_(r), eps_V_(eps_V), S_max_(S_max) {
        a_ = 45.0 * std::numbers::e * std::pow(q_, 2 * r_) * eps_V_;
    }

    double alpha() const { return alpha_; }
    double q() const { return q_; }
    double r() const { return r_; }
    double qr() const { return std::pow(q_, r_); }
    double eps_V() const { return eps_V_; }
    double a() const { return a_; }
    int S_max() const { return S_max_; }

    // φ_s = a s^α q^{−rs}, φ_0 = φ_1
    double phi_s(int s) const {
        const int t = std::max(s, 1);
        return a_ * std::pow(static_cast<double>(t), alpha_) * std::pow(q_, -r_ * t);
    }
    // E_s = q^{s+1}, E_{−1} = 1
    double E(int s) const { return s < 0 ? 1.0 : std::pow(q_, s + 1); }
    double rho(int s) const { return 1.0 / E(s) - 1.0 / E(s + 1); }

    std::vector<double> phis() const { return materialize([this](int s) { return phi_s(s); }); }
    std::vector<double> Es() const { return materialize([this](int s) { return E(s); }); }
    std::vector<double> rhos() const { return materialize([this](int s) { return rho(s); }); }

private:
    template <class F>
    std::vector<double> materialize(F f) const {
        std::vector<double> v;
        for (int s = 0; s <= S_max_ + 1; ++s) v.push_back(f(s));
        return v;
    }

    double alpha_, q_, r_, eps_V_;
    int S_max_;
    double a_;
};

inline Schedule make_schedule(double alpha, double q, double r, double eps_V, int S_max) {
    if (!(alpha > 1)) throw ConfigError("schedule: alpha > 1 required");
    if (!(q > 1)) throw ConfigError("schedule: q > 1 required");
    if (!(r > 0)) throw ConfigError("schedule: r > 0 required");
    if (!(eps_V >= 0) || !std::isfinite(eps_V)) throw ConfigError("schedule: eps_V must be finite and >= 0");
    if (S_max < 0) throw ConfigError("schedule: S_max >= 0 required");
    const double qr = std::pow(q, r);
    if (qr < std::exp(alpha) * (1 - 1e-12))
        throw ConfigError("schedule: inequality q^r >= e^alpha fails (q^r = " + std::to_string(qr) + ")");
    if (zeta(alpha) / qr > 3 * std::numbers::ln2)
        throw ConfigError("schedule: inequality q^{-r} zeta(alpha) <= 3 ln 2 fails");
    return Schedule(alpha, q, r, eps_V, S_max);
}

// α = 2, q^r = e².
inline Schedule schedule_e2(double r, double eps_V, int S_max) {
    return make_schedule(2.0, std::exp(2.0 / r), r, eps_V, S_max);
}

// Alternate recipe: α = 2, q = e^{4/(2σ+1)}; meant for r ≤ (7/8)(2σ+1).
inline Schedule schedule_sigma(double sigma, double r, double eps_V, int S_max) {
    if (r > 0.875 * (2 * sigma + 1)) throw ConfigError("schedule_sigma: r <= (7/8)(2 sigma + 1) required");
    return make_schedule(2.0, std::exp(4.0 / (2 * sigma + 1)), r, eps_V, S_max);
}

struct ContractionConstants {
    double A_star = 0, B_star = 0, C_star = 0;                 // closed forms
    double A_star_series = 0, B_star_series = 0, C_star_series = 0;
    double A = 0, B = 0, C = 0;                                 // times ε_V
    double d = 3.0;
    bool smallness_B = false;   // ε_V B★ ≤ ln2/3
    bool smallness_A = false;   // ε_V A★ φ(3 ε_V C★) ≤ 1/9
    bool contraction = false;   // e^{dB} + A φ(dC) d² ≤ d
    double contraction_lhs = 0;
};

inline ContractionConstants contraction_constants(const Schedule& sch) {
    constexpr double e = std::numbers::e;
    const double qr = sch.qr(), a = sch.a(), eps = sch.eps_V();
    const double z = zeta(sch.alpha());
    ContractionConstants c;
    c.A_star = 5 * e * qr * qr / a;
    c.B_star = 5 * e * qr * z / a;
    c.C_star = 5 * e * qr / a;

    // sup / series over s ≤ S_max using the materialized sequences, plus a tail
    double asup = 0, csup = 0, bsum = 0;
    for (int s = 0; s <= sch.S_max(); ++s) {
        const double ps = sch.phi_s(s + 1), em = std::pow(sch.E(s - 1), sch.r());
        asup = std::max(asup, std::pow(sch.E(s), sch.r()) / (ps * em * em));
        csup = std::max(csup, 1.0 / (ps * em));
        bsum += 1.0 / (ps * em);
    }
    // remaining terms are q^r/(a j^α), j ≥ S_max + 2
    bsum += qr / a * detail::zeta_tail(sch.alpha(), sch.S_max() + 2.0);
    c.A_star_series = 5 * e * asup;
    c.C_star_series = 5 * e * csup;
    c.B_star_series = 5 * e * bsum;

    if (a > 0) {
        c.A = eps * c.A_star;
        c.B = eps * c.B_star;
        c.C = eps * c.C_star;
    } else {  // ε_V → 0 limit; the ratios do not depend on ε_V
        c.A = 1.0 / 9;
        c.B = z / qr / 9;
        c.C = 1.0 / qr / 9;
    }
    c.smallness_B = c.B <= std::numbers::ln2 / 3;
    c.smallness_A = c.A * phi(3 * c.C) <= 1.0 / 9;
    c.contraction_lhs = std::exp(c.d * c.B) + c.A * phi(c.d * c.C) * c.d * c.d;
    c.contraction = c.contraction_lhs <= c.d;
    return c;
}

struct EpsStar {
    double value;
    double bound1;  // from the cumulative diagonal-shift requirement
    double bound2;  // from the first-stage threshold requirement
};

inline EpsStar eps_star(double r, double Delta0, double J, double alpha, double q) {
    if (!(Delta0 > 0) || !(J > 0)) throw ConfigError("eps_star: Delta0 > 0 and J > 0 required");
    if (!(alpha > 1)) throw ConfigError("eps_star: alpha > 1 required");
    constexpr double e = std::numbers::e;
    const double qr = std::pow(q, r);
    const double b1 = std::min(Delta0 / 4, 7 * J / 72) * (1 - 1 / qr) / (3 * e);
    const double b2 = std::min(2 * Delta0 / 3, J / 6) / (45 * e * qr);
    return {std::min(b1, b2), b1, b2};
}

inline double delta_one(double sigma, double r, double alpha, double q) {
    if (!(r > sigma + 0.5)) throw DivergenceError("delta_star: r > sigma + 1/2 required");
    constexpr double e = std::numbers::e;
    const double z = std::pow(q, -r + sigma + 0.5);
    return 1440 * e * std::pow(q, 2 * r) * std::pow(2.0, sigma) *
           std::pow((2 * sigma + 1) / ((1 - 1 / q) * e), sigma + 0.5) * polylog_neg(alpha, z);
}

inline double delta_star(double sigma, double r, double /*J*/, double alpha, double q, double Delta_sigma_J) {
    return delta_one(sigma, r, alpha, q) * Delta_sigma_J;
}

struct VBound {
    double v;  // e ε_V / E_{s−1}^r
    double F;  // 5 / φ_{s+1}
};

inline VBound v_bound(const Schedule& sch, int s) {
    if (s < 0) throw UsageError("v_bound: s >= 0 required");
    return {std::numbers::e * sch.eps_V() / std::pow(sch.E(s - 1), sch.r()), 5.0 / sch.phi_s(s + 1)};
}

}  // namespace floquet_kam
