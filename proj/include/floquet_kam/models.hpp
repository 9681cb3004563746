#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floquet_kam/block_ops.hpp"

namespace floquet_kam {

// Particle in a box driven by z(t) x²; levels m²π², m = 1..M_max (stored 0-based).
struct SquareWellModel {
    std::map<int, cplx> z;  // Fourier coefficients z_k of the drive
    int M_max = 6;
    int K_max = 1;  // drive modes with |k| > K_max are dropped

    void validate() const {
        if (M_max < 2) throw ConfigError("square_well: M_max >= 2 required");
        if (K_max < 0) throw ConfigError("square_well: K_max >= 0 required");
        for (const auto& [k, zk] : z) {
            auto it = z.find(-k);
            const cplx partner = it == z.end() ? cplx(0) : it->second;
            if (std::abs(partner - std::conj(zk)) > 1e-14 * std::max(1.0, std::abs(zk)))
                throw ConfigError("square_well: drive is not real (z_{-k} != conj z_k at k = " + std::to_string(k) + ")");
        }
    }
};

struct RotorModel {
    int N = 2;
    int M_max = 10;
    double envelope_const = 1.0;
};

inline SpectrumPtr square_well_spectrum(int M_max) {
    std::vector<double> levels;
    for (int m = 1; m <= M_max; ++m) levels.push_back(m * m * std::numbers::pi * std::numbers::pi);
    return std::make_shared<const Spectrum>(levels, std::vector<int>(static_cast<std::size_t>(M_max), 1));
}

// Matrix element ⟨n|x²|m⟩ on [0,1] with 1-based level numbers.
inline double square_well_x2(int n, int m) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    if (n == m) return 1.0 / 3.0 - 1.0 / (2.0 * m * m * pi2);
    const double d = static_cast<double>(m) * m - static_cast<double>(n) * n;
    return 8.0 * (((m + n) % 2 == 0) ? 1.0 : -1.0) * m * n / (d * d * pi2);
}

inline BlockOperator square_well_blocks(const SquareWellModel& model, OmegaGrid grid = single_point_grid(0.0)) {
    model.validate();
    BlockOperator V(square_well_spectrum(model.M_max), std::move(grid));
    for (const auto& [k, zk] : model.z) {
        if (std::abs(k) > model.K_max || zk == cplx(0)) continue;
        for (int n = 0; n < model.M_max; ++n)
            for (int m = 0; m < model.M_max; ++m) V.set({k, n, m}, Matrix::Constant(1, 1, zk * square_well_x2(n + 1, m + 1)));
    }
    return V;
}

// z(t) = amplitude·cos t
inline std::map<int, cplx> drive_cos(double amplitude = 1.0) {
    return {{-1, amplitude / 2}, {1, amplitude / 2}};
}

// z_k = (−1)^k |k|^{−s−1.1} for 1 ≤ |k| ≤ K_max: a real even drive of finite smoothness
inline std::map<int, cplx> drive_smooth(double s, int K_max, double amplitude = 1.0) {
    std::map<int, cplx> z;
    for (int k = 1; k <= K_max; ++k) {
        const double v = amplitude * ((k % 2) ? -1.0 : 1.0) * std::pow(k, -s - 1.1);
        z[k] = v;
        z[-k] = v;
    }
    return z;
}

inline double binomial(int n, int k) {
    if (k < 0 || n < k) return 0.0;
    double c = 1.0;
    for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
    return std::round(c);
}

inline int rotor_multiplicity(int N, int m) {
    return static_cast<int>(binomial(m + N, N) - binomial(m + N - 2, N));
}

inline SpectrumPtr rotor_spectrum(int N, int M_max) {
    if (N < 1) throw ConfigError("rotor: N >= 1 required");
    if (M_max < 1) throw ConfigError("rotor: M_max >= 1 required");
    std::vector<double> levels;
    std::vector<int> mults;
    for (int m = 0; m < M_max; ++m) {
        levels.push_back(static_cast<double>(m) * (m + N - 1));
        mults.push_back(rotor_multiplicity(N, m));
    }
    return std::make_shared<const Spectrum>(levels, mults);
}

// Envelope const·(1 + min{h_n,h_m}) / (|k|^s (h_m − h_n)²) for n ≠ m, k ≠ 0.
inline double rotor_envelope(const Spectrum& sp, int k, int n, int m, double s, double c = 1.0) {
    if (n == m || k == 0) throw UsageError("rotor_envelope: requires n != m and k != 0");
    const double g = sp.gap(m, n);
    return c * (1 + std::min(sp.level(n), sp.level(m))) / (std::pow(std::abs(k), s) * g * g);
}

// sup_n Σ_{k,m} ‖V_knm‖ max{|k|^r, 1}, sup also over grid points
inline double epsilon_V(const BlockOperator& V, double r) {
    double best = 0.0;
    for (std::size_t w = 0; w < V.grid_size(); ++w) {
        std::vector<double> rows(static_cast<std::size_t>(V.spectrum().size()), 0.0);
        for (const auto& [idx, s] : V.entries())
            rows[static_cast<std::size_t>(idx.n)] +=
                spectral_norm(s[w]) * std::max(std::pow(std::abs(idx.k), r), 1.0);
        best = std::max(best, *std::max_element(rows.begin(), rows.end()));
    }
    return best;
}

// Σ_k |z_k| max{|k|^r, 1}: the square-well ε_V when the level count is unbounded
inline double drive_weight(const std::map<int, cplx>& z, double r, int K_max) {
    double s = 0.0;
    for (const auto& [k, zk] : z)
        if (std::abs(k) <= K_max) s += std::abs(zk) * std::max(std::pow(std::abs(k), r), 1.0);
    return s;
}

struct DeltaSigma {
    double value = 0.0;
    double last_shell = 0.0;      // contribution of pairs involving the top level
    double local_exponent = 0.0;  // p in shell(m) ~ m^{−p}, from the top and middle shells
    bool diverging = false;       // p ≤ 1: partial sums keep growing with M_max
};

// J^σ Σ_{Δ_mn > J/2} μ_mn / Δ_mn^σ over the stored levels
inline DeltaSigma delta_sigma(const Spectrum& sp, double sigma, double J) {
    if (!(sigma > 0)) throw ConfigError("delta_sigma: sigma > 0 required");
    const int M = sp.size();
    std::vector<double> shell(static_cast<std::size_t>(M), 0.0);  // pairs with max(m,n) = top
    for (int m = 0; m < M; ++m)
        for (int n = 0; n < M; ++n) {
            const double d = sp.gap(m, n);
            if (d > J / 2) shell[static_cast<std::size_t>(m)] += std::pow(J, sigma) * sp.mu(m, n) / std::pow(d, sigma);
        }
    DeltaSigma out;
    for (double v : shell) out.value += v;
    out.last_shell = shell.back();
    const int mid = M / 2;
    if (M >= 4 && shell[static_cast<std::size_t>(mid - 1)] > 0 && out.last_shell > 0) {
        // fit between the 1-based shell numbers mid and M
        out.local_exponent = -std::log(out.last_shell / shell[static_cast<std::size_t>(mid - 1)]) /
                             std::log(static_cast<double>(M) / mid);
        out.diverging = out.local_exponent <= 1.0;
    }
    return out;
}

struct AnCheck {
    double series;
    double closed_form;
};

// Σ_{m ≥ 0, m ≠ n} (1 + min{n², m²}) / (m² − n²)² against its closed form
inline AnCheck rotor_an_check(int n, int terms) {
    if (n < 1 || terms < 1) throw ConfigError("rotor_an_check: n >= 1 and terms >= 1 required");
    const double nn = static_cast<double>(n) * n;
    double series = 0.0;
    for (int m = terms; m >= 0; --m) {
        if (m == n) continue;
        const double mm = static_cast<double>(m) * m;
        series += (1 + std::min(nn, mm)) / ((mm - nn) * (mm - nn));
    }
    double harmonic = 0.0;
    for (int m = 1; m <= 2 * n - 1; ++m) harmonic += 1.0 / m;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    const double closed = (1 + 1 / nn) * pi2 / 12 - 3 / (16 * nn) + 5 / (16 * nn * nn) - harmonic / (2 * n);
    return {series, closed};
}

inline std::map<int, cplx> parse_drive(const nlohmann::json& z) {
    std::map<int, cplx> out;
    for (const auto& e : z) {
        if (!e.is_array() || e.size() < 2 || e.size() > 3) throw ConfigError("drive entries must be [k, re, im]");
        const int k = e.at(0).get<int>();
        const double re = e.at(1).get<double>();
        const double im = e.size() == 3 ? e.at(2).get<double>() : 0.0;
        out[k] += cplx(re, im);
    }
    return out;
}

inline nlohmann::json drive_to_json(const std::map<int, cplx>& z) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [k, v] : z) a.push_back({k, v.real(), v.imag()});
    return a;
}

inline SquareWellModel square_well_from_json(const nlohmann::json& j) {
    try {
        SquareWellModel m;
        m.M_max = j.value("M_max", 6);
        if (j.contains("z")) {
            m.z = parse_drive(j.at("z"));
        } else {
            const std::string d = j.value("drive", "cos");
            if (d == "cos") m.z = drive_cos(j.value("amplitude", 1.0));
            else if (d == "smooth") m.z = drive_smooth(j.value("smoothness", 4.0), j.value("K_max", 8), j.value("amplitude", 1.0));
            else throw ConfigError("unknown drive preset '" + d + "'");
        }
        int kmax = 0;
        for (const auto& [k, _] : m.z) kmax = std::max(kmax, std::abs(k));
        m.K_max = j.value("K_max", kmax);
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("square_well config: ") + e.what());
    }
}

inline RotorModel rotor_from_json(const nlohmann::json& j) {
    try {
        RotorModel m;
        m.N = j.value("N", 2);
        m.M_max = j.value("M_max", 10);
        m.envelope_const = j.value("const", 1.0);
        if (m.N < 1 || m.M_max < 1) throw ConfigError("rotor: N >= 1 and M_max >= 1 required");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("rotor config: ") + e.what());
    }
}

}  // namespace floquet_kam
