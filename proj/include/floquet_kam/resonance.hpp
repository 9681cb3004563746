#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "floquet_kam/block_ops.hpp"
#include "floquet_kam/models.hpp"
#include "floquet_kam/schedules.hpp"
#include "floquet_kam/sylvester.hpp"

namespace floquet_kam {

enum class IndexClass { Diagonal, NonCriticalZero, NonCriticalNonzero, Critical };

inline const char* to_string(IndexClass c) {
    switch (c) {
        case IndexClass::Diagonal: return "Diagonal";
        case IndexClass::NonCriticalZero: return "NonCriticalZero";
        case IndexClass::NonCriticalNonzero: return "NonCriticalNonzero";
        case IndexClass::Critical: return "Critical";
    }
    return "?";
}

inline IndexClass classify_index(int k, int n, int m, const Spectrum& sp, double J) {
    if (k == 0 && n == m) return IndexClass::Diagonal;
    if (m != n) {
        const double ratio = k * J / sp.gap(m, n);
        if (ratio > 0.5 && ratio < 2.0) return IndexClass::Critical;
    }
    return k == 0 ? IndexClass::NonCriticalZero : IndexClass::NonCriticalNonzero;
}

inline double psi(int s, int k, int n, int m, IndexClass cls, const Schedule& sch, const Spectrum& sp, double J,
                  double Delta0) {
    switch (cls) {
        case IndexClass::Diagonal: throw UsageError("psi: undefined on diagonal indices");
        case IndexClass::NonCriticalZero: return Delta0 / 2;
        case IndexClass::NonCriticalNonzero: return 7.0 / 18.0 * J * (std::abs(k) - 0.5);
        case IndexClass::Critical: {
            const double ak = std::abs(k);
            return sch.phi_s(s + 1) * std::sqrt(static_cast<double>(std::min(sp.mult(m), sp.mult(n)))) * std::sqrt(ak) *
                   std::exp(-sch.rho(s) * ak / 2);
        }
    }
    return 0.0;
}

inline double psi(int s, const BlockIndex& b, const Schedule& sch, const Spectrum& sp, double J, double Delta0) {
    return psi(s, b.k, b.n, b.m, classify_index(b.k, b.n, b.m, sp, J), sch, sp, J, Delta0);
}

// All critical indices: Δ_mn/2J < k < 2Δ_mn/J (negative k for negative gaps).
inline std::vector<BlockIndex> critical_indices(const Spectrum& sp, double J) {
    std::vector<BlockIndex> out;
    for (int n = 0; n < sp.size(); ++n)
        for (int m = 0; m < sp.size(); ++m) {
            if (m == n) continue;
            const double d = sp.gap(m, n);
            const double lo = std::min(d / (2 * J), 2 * d / J), hi = std::max(d / (2 * J), 2 * d / J);
            for (int k = static_cast<int>(std::floor(lo)); k <= static_cast<int>(std::ceil(hi)); ++k)
                if (k != 0 && classify_index(k, n, m, sp, J) == IndexClass::Critical) out.push_back({k, n, m});
        }
    return out;
}

// Critical indices plus every non-diagonal index with |k| ≤ K.
inline std::vector<BlockIndex> resonance_index_set(const Spectrum& sp, double J, int K) {
    std::vector<BlockIndex> out = critical_indices(sp, J);
    for (int k = -K; k <= K; ++k)
        for (int n = 0; n < sp.size(); ++n)
            for (int m = 0; m < sp.size(); ++m) {
                if (k == 0 && n == m) continue;
                if (classify_index(k, n, m, sp, J) != IndexClass::Critical) out.push_back({k, n, m});
            }
    std::sort(out.begin(), out.end());
    return out;
}

// dist(Spec(kω − Δ_mn + W_0nn), Spec(W_0mm)) from the sorted spectra of the diagonal blocks
inline double index_distance(double omega, const BlockIndex& b, const std::vector<RealVector>& diag_eigs,
                             const Spectrum& sp) {
    const RealVector a = diag_eigs.at(static_cast<std::size_t>(b.n)).array() + (b.k * omega - sp.gap(b.m, b.n));
    return sorted_distance(a, diag_eigs.at(static_cast<std::size_t>(b.m)));
}

struct NonresonanceResult {
    bool ok = true;
    // index with the smallest margin distance − ψ (the failing one when !ok)
    std::optional<BlockIndex> witness;
    double distance = std::numeric_limits<double>::infinity();
    double psi = 0.0;
};

inline std::vector<RealVector> diagonal_eigenvalues(const std::vector<Matrix>& W_diag) {
    std::vector<RealVector> out;
    out.reserve(W_diag.size());
    for (const auto& w : W_diag) out.push_back(hermitian_eigenvalues(w));
    return out;
}

struct ResonanceContext {
    SpectrumPtr spectrum;
    double J = 0;
    double Delta0 = 0;
    std::vector<BlockIndex> index_set;
};

inline NonresonanceResult is_nonresonant(double omega, int s, const std::vector<Matrix>& W_diag, const Schedule& sch,
                                         const ResonanceContext& ctx) {
    const Spectrum& sp = *ctx.spectrum;
    if (static_cast<int>(W_diag.size()) != sp.size()) throw UsageError("is_nonresonant: one diagonal block per level");
    const auto eigs = diagonal_eigenvalues(W_diag);
    NonresonanceResult res;
    double best_margin = std::numeric_limits<double>::infinity();
    for (const auto& b : ctx.index_set) {
        if (b.is_diagonal()) continue;
        const double d = index_distance(omega, b, eigs, sp);
        const double p = psi(s, b, sch, sp, ctx.J, ctx.Delta0);
        const double margin = d - p;
        if (margin < best_margin) {
            best_margin = margin;
            res.witness = b;
            res.distance = d;
            res.psi = p;
        }
    }
    res.ok = best_margin >= 0;
    return res;
}

struct BadMeasureBound {
    double sum = 0.0;       // 8 Σ Σ (M_m M_n / k) ψ_s over critical indices with Δ_mn > J/2
    double majorant = 0.0;  // 32 2^σ φ_{s+1} ((2σ+1)/(e ϱ_s))^{σ+1/2} Δ_σ(J)
};

inline BadMeasureBound bad_measure_bound(int s, const Spectrum& sp, const Schedule& sch, double sigma, double J) {
    BadMeasureBound out;
    const double Delta0 = sp.delta0();
    for (int n = 0; n < sp.size(); ++n)
        for (int m = 0; m < sp.size(); ++m) {
            const double d = sp.gap(m, n);
            if (!(d > J / 2)) continue;
            for (int k = static_cast<int>(std::floor(d / (2 * J))); k <= static_cast<int>(std::ceil(2 * d / J)); ++k) {
                if (k <= 0 || classify_index(k, n, m, sp, J) != IndexClass::Critical) continue;
                out.sum += 8.0 * sp.mult(m) * sp.mult(n) / k * psi(s, k, n, m, IndexClass::Critical, sch, sp, J, Delta0);
            }
        }
    const double ds = delta_sigma(sp, sigma, J).value;
    out.majorant = 32 * std::pow(2.0, sigma) * sch.phi_s(s + 1) *
                   std::pow((2 * sigma + 1) / (std::numbers::e * sch.rho(s)), sigma + 0.5) * ds;
    return out;
}

enum class PointState { Good, Resonant, Unprocessed };

inline const char* to_string(PointState p) {
    switch (p) {
        case PointState::Good: return "good";
        case PointState::Resonant: return "resonant";
        case PointState::Unprocessed: return "unprocessed";
    }
    return "?";
}

struct PointStatus {
    PointState state = PointState::Unprocessed;
    int stage = -1;  // last stage tested
    NonresonanceResult last;
};

struct ResonanceRow {
    double omega;
    int stage;
    PointState status;
    NonresonanceResult result;
};

// Cell-centred sample of Ω₀ = [8J/9, 9J/8]; each point stands for one cell.
class FrequencyGrid {
public:
    FrequencyGrid(double J, int points) : J_(J) {
        if (!(J > 0)) throw ConfigError("FrequencyGrid: J > 0 required");
        if (points < 1) throw ConfigError("FrequencyGrid: at least one point required");
        const double lo = 8 * J / 9, hi = 9 * J / 8;
        cell_ = (hi - lo) / points;
        for (int i = 0; i < points; ++i) points_.push_back(lo + (i + 0.5) * cell_);
        status_.resize(static_cast<std::size_t>(points));
    }

    double J() const { return J_; }
    double omega_min() const { return 8 * J_ / 9; }
    double omega_max() const { return 9 * J_ / 8; }
    double total_measure() const { return omega_max() - omega_min(); }
    double cell_width() const { return cell_; }
    std::size_t size() const { return points_.size(); }
    const std::vector<double>& points() const { return points_; }
    const PointStatus& status(std::size_t i) const { return status_.at(i); }
    const std::vector<ResonanceRow>& history() const { return history_; }

    // Record the stage-s outcome at point i. Resonant points stay resonant.
    void record(std::size_t i, int s, const NonresonanceResult& r) {
        auto& st = status_.at(i);
        if (st.state == PointState::Resonant) throw UsageError("FrequencyGrid: point already excluded");
        st.stage = s;
        st.last = r;
        st.state = r.ok ? PointState::Good : PointState::Resonant;
        history_.push_back({points_[i], s, st.state, r});
    }

    std::size_t count(PointState p) const {
        return static_cast<std::size_t>(std::count_if(status_.begin(), status_.end(), [p](const PointStatus& s) { return s.state == p; }));
    }
    double good_measure() const { return count(PointState::Good) * cell_; }
    double bad_measure() const { return count(PointState::Resonant) * cell_; }

    // Maximal runs of consecutive resonant points.
    int excluded_intervals() const {
        int runs = 0;
        bool in_run = false;
        for (const auto& s : status_) {
            const bool bad = s.state == PointState::Resonant;
            if (bad && !in_run) ++runs;
            in_run = bad;
        }
        return runs;
    }

    void write_csv(std::ostream& os) const {
        os << "omega,stage,status,witness_k,witness_n,witness_m,distance,psi\n";
        char buf[512];
        std::vector<const ResonanceRow*> rows;
        for (const auto& r : history_) rows.push_back(&r);
        std::stable_sort(rows.begin(), rows.end(), [](const ResonanceRow* a, const ResonanceRow* b) {
            return a->omega != b->omega ? a->omega < b->omega : a->stage < b->stage;
        });
        for (const auto* r : rows) {
            const auto& w = r->result.witness;
            if (w) {
                std::snprintf(buf, sizeof buf, "%.17g,%d,%s,%d,%d,%d,%.17g,%.17g\n", r->omega, r->stage, to_string(r->status),
                              w->k, w->n, w->m, r->result.distance, r->result.psi);
            } else {
                std::snprintf(buf, sizeof buf, "%.17g,%d,%s,,,,,\n", r->omega, r->stage, to_string(r->status));
            }
            os << buf;
        }
    }

private:
    double J_;
    double cell_ = 0;
    std::vector<double> points_;
    std::vector<PointStatus> status_;
    std::vector<ResonanceRow> history_;
};

// Stage-s exclusion: test every point that is not already resonant.
// provider(i) returns the diagonal blocks W_0nn at point i.
template <class Provider>
void exclude_resonant(FrequencyGrid& grid, int s, Provider&& provider, const Schedule& sch, const ResonanceContext& ctx) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid.status(i).state == PointState::Resonant) continue;
        grid.record(i, s, is_nonresonant(grid.points()[i], s, provider(i), sch, ctx));
    }
}

}  // namespace floquet_kam
