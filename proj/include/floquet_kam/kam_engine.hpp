#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floquet_kam/block_ops.hpp"
#include "floquet_kam/resonance.hpp"
#include "floquet_kam/schedules.hpp"
#include "floquet_kam/sylvester.hpp"

namespace floquet_kam {

// The perturbation V (ω-independent, sampled at one point), the frequency scale J and the schedule.
struct KamProblem {
    BlockOperator V;
    double J;
    Schedule sched;

    const Spectrum& spectrum() const { return V.spectrum(); }
    double Delta0() const { return V.spectrum().delta0(); }
};

struct SeriesControl {
    double tol = 1e-12;  // relative to the weighted norm of the input
    int max_terms = 80;
};

struct EngineConfig {
    SeriesControl series;
    double v_floor = 1e-15;
    double prune_tol = 1e-30;
    int K_verify = 0;   // dense basis cutoff for identity checks; 0 disables them
    int K_window = -1;  // interior window; −1 means K_verify − ceil(E_{S_max})
};

// Blocks with |k| < E survive.
inline BlockOperator cutoff(const BlockOperator& V, double E) {
    BlockOperator out = V.zero_like();
    for (const auto& [idx, s] : V.entries())
        if (std::abs(idx.k) < E) out.set(idx, s);
    return out;
}

inline std::vector<Matrix> diagonal_blocks(const BlockOperator& W, std::size_t w = 0) {
    std::vector<Matrix> out;
    for (int m = 0; m < W.spectrum().size(); ++m) out.push_back(W.block({0, m, m}, w));
    return out;
}

// Solves (kω − Δ_mn + W_0nn) X − X W_0mm = Y_knm per non-diagonal index. Checks each divisor
// against ψ_s and raises ResonanceError with the offending index.
inline BlockOperator build_gamma_apply(double omega, int s, const std::vector<Matrix>& W_diag, const BlockOperator& Y,
                                       const Schedule& sch, double J, double Delta0) {
    if (Y.grid_size() != 1) throw UsageError("build_gamma_apply: Y must be sampled at the single frequency");
    const Spectrum& sp = Y.spectrum();
    std::vector<HermitianEig> eig;
    std::vector<RealVector> vals;
    for (const auto& w : W_diag) {
        eig.push_back(hermitian_eig(w));
        vals.push_back(eig.back().values);
    }
    BlockOperator X = Y.zero_like();
    for (const auto& [idx, ys] : Y.entries()) {
        if (idx.is_diagonal()) continue;
        const double d = index_distance(omega, idx, vals, sp);
        const double p = psi(s, idx, sch, sp, J, Delta0);
        if (d < p)
            throw ResonanceError("resonant index " + to_string(idx) + " at stage " + std::to_string(s), d, p, idx, s);
        const auto n = static_cast<std::size_t>(idx.n), m = static_cast<std::size_t>(idx.m);
        X.set(idx, solve_commutation(eig[n], eig[m], ys[0], idx.k * omega - sp.gap(idx.m, idx.n)));
    }
    X.set_k_store(Y.k_store());
    return X;
}

// e^{ad_A} X = Σ_j ad_A^j X / j!
inline BlockOperator apply_exp_ad(const BlockOperator& A, const BlockOperator& X, double E, const SeriesControl& sc = {},
                                  double prune_tol = 1e-30) {
    if (A.empty() || X.empty()) return X;
    const double scale = weighted_norm(X, 0.0, E);
    BlockOperator sum = X, term = X;
    for (int j = 1; j <= sc.max_terms; ++j) {
        term = (1.0 / j) * commutator(A, term);
        term.prune(prune_tol);
        sum = sum + term;
        if (weighted_norm(term, 0.0, E) <= sc.tol * scale) break;
    }
    return sum;
}

// Θφ(Θ)Y = Σ_{j≥1} j/(j+1)! ad_A^j Y
inline BlockOperator apply_theta_phi_theta(const BlockOperator& A, const BlockOperator& Y, double E,
                                           const SeriesControl& sc = {}, double prune_tol = 1e-30) {
    BlockOperator sum = Y.zero_like();
    if (A.empty() || Y.empty()) return sum;
    const double scale = weighted_norm(Y, 0.0, E);
    BlockOperator term = Y;  // ad^j Y / j!
    for (int j = 1; j <= sc.max_terms; ++j) {
        term = (1.0 / j) * commutator(A, term);
        term.prune(prune_tol);
        const BlockOperator contrib = (static_cast<double>(j) / (j + 1)) * term;
        sum = sum + contrib;
        if (weighted_norm(contrib, 0.0, E) <= sc.tol * scale) break;
    }
    return sum;
}

struct StageDiagnostics {
    int s = 0;
    double w = 0;       // ‖W_s − W_{s−1}‖ at (φ_s, E_s)
    double v = 0;       // e ε_V / E_{s−1}^r
    double a_norm = 0;  // ‖A_s‖ at (φ_{s+1}, E_{s+1}); set once A_s is built
    double gamma_ratio = 0;
    double gamma_bound = 0;  // 5 / (2 φ_{s+1})
    bool gamma_bound_ok = true;
    bool exclusion_hypotheses = false;
    bool contraction_ok = true;  // w_s ≤ 3 v_s
    double W_symmetry_defect = 0;
    double A_symmetry_defect = 0;
    double max_diag_norm = 0;
    double diag_lipschitz = 0;  // not sampled in single-frequency runs
    std::optional<double> identity_residual;
    std::optional<NonresonanceResult> resonance;
};

struct IterationState {
    int s = 0;
    double omega = 0;
    BlockOperator V_cur, W_cur, W_prev;
    std::vector<BlockOperator> A_list;
    std::vector<StageDiagnostics> diagnostics;
};

inline StageDiagnostics stage_diagnostics(const IterationState& st, const KamProblem& pb) {
    const Schedule& sch = pb.sched;
    StageDiagnostics d;
    d.s = st.s;
    d.w = weighted_norm(st.W_cur - st.W_prev, sch.phi_s(st.s), sch.E(st.s));
    d.v = v_bound(sch, st.s).v;
    d.contraction_ok = d.w <= 3 * d.v * (1 + 1e-12) + 1e-300;
    d.W_symmetry_defect = hermitian_symmetry_defect(st.W_cur);
    for (const auto& m : diagonal_blocks(st.W_cur)) d.max_diag_norm = std::max(d.max_diag_norm, spectral_norm(m));
    const double D0 = pb.Delta0(), J = pb.J;
    d.exclusion_hypotheses = d.max_diag_norm <= std::min(D0 / 4, 7 * J / 72) &&
                             sch.phi_s(st.s + 1) <= std::min(2 * D0 / 3, J / 6);
    d.gamma_bound = 5.0 / (2.0 * sch.phi_s(st.s + 1));
    return d;
}

inline IterationState init_state(const KamProblem& pb, double omega) {
    const OmegaGrid grid = single_point_grid(omega);
    const BlockOperator V = constant_on(pb.V, grid);
    IterationState st{0, omega, cutoff(V, pb.sched.E(0)), BlockOperator(V.spectrum_ptr(), grid), V.zero_like(), {}, {}};
    st.W_cur = st.V_cur;
    st.diagnostics.push_back(stage_diagnostics(st, pb));
    return st;
}

inline ResonanceContext stage_context(const IterationState& st, const KamProblem& pb) {
    const int K = std::max((st.W_cur - st.W_prev).max_abs_k(), 1);
    return {st.W_cur.spectrum_ptr(), pb.J, pb.Delta0(), resonance_index_set(pb.spectrum(), pb.J, K)};
}

inline NonresonanceResult stage_resonance(const IterationState& st, const KamProblem& pb) {
    return is_nonresonant(st.omega, st.s, diagonal_blocks(st.W_cur), pb.sched, stage_context(st, pb));
}

inline BlockOperator build_A(const IterationState& st, const KamProblem& pb) {
    return build_gamma_apply(st.omega, st.s, diagonal_blocks(st.W_cur), off_diagonal_part(st.W_cur - st.W_prev), pb.sched,
                             pb.J, pb.Delta0());
}

// T_{s+1} X = e^{ad A_s} ··· e^{ad A_0} X
inline BlockOperator apply_T(const std::vector<BlockOperator>& A_list, BlockOperator X, double E, const SeriesControl& sc,
                             double prune_tol) {
    for (const auto& A : A_list) X = apply_exp_ad(A, X, E, sc, prune_tol);
    return X;
}

// One stage s → s+1. Raises ResonanceError if ω fails the stage-s test.
inline void iterate_step(IterationState& st, const BlockOperator& V_full, const KamProblem& pb, const EngineConfig& cfg = {},
                         bool check_resonance = true) {
    const Schedule& sch = pb.sched;
    auto& diag = st.diagnostics.back();
    if (check_resonance) {
        const auto res = stage_resonance(st, pb);
        diag.resonance = res;
        if (!res.ok)
            throw ResonanceError("resonance at stage " + std::to_string(st.s), res.distance, res.psi, res.witness, st.s);
    }
    const BlockOperator Y = off_diagonal_part(st.W_cur - st.W_prev);
    BlockOperator A = build_A(st, pb);
    const double E1 = sch.E(st.s + 1);
    diag.a_norm = weighted_norm(A, sch.phi_s(st.s + 1), E1);
    const double y_norm = weighted_norm(Y, sch.phi_s(st.s), sch.E(st.s));
    diag.gamma_ratio = y_norm > 0 ? diag.a_norm / y_norm : 0.0;
    diag.gamma_bound_ok = diag.gamma_ratio <= diag.gamma_bound * (1 + 1e-12);
    diag.A_symmetry_defect = anti_hermitian_symmetry_defect(A);

    const BlockOperator V_next = cutoff(V_full, E1);
    st.A_list.push_back(A);
    BlockOperator W_next = st.W_cur + apply_T(st.A_list, V_next - st.V_cur, E1, cfg.series, cfg.prune_tol) +
                           apply_theta_phi_theta(A, Y, E1, cfg.series, cfg.prune_tol);
    W_next.prune(cfg.prune_tol);

    st.W_prev = std::move(st.W_cur);
    st.W_cur = std::move(W_next);
    st.V_cur = V_next;
    ++st.s;
    st.diagnostics.push_back(stage_diagnostics(st, pb));
}

// Diagonal of K on the truncated dense basis: kω + h_m.
inline RealVector k_diagonal(const Spectrum& sp, int K_trunc, double omega) {
    RealVector d(dense_dim(sp, K_trunc));
    for (int k = -K_trunc; k <= K_trunc; ++k)
        for (int m = 0; m < sp.size(); ++m)
            for (int i = 0; i < sp.mult(m); ++i) d(dense_index(sp, K_trunc, k, m, i)) = k * omega + sp.level(m);
    return d;
}

// U_S = e^{A_{S−1}} ··· e^{A_0}
inline Matrix assemble_U(const std::vector<BlockOperator>& A_list, int K_trunc) {
    if (A_list.empty()) throw UsageError("assemble_U: needs at least one factor to fix the basis");
    const Eigen::Index n = dense_dim(A_list.front().spectrum(), K_trunc);
    Matrix U = Matrix::Identity(n, n);
    for (const auto& A : A_list) U = expm(to_dense(A, K_trunc)) * U;
    return U;
}

// max of 1- and ∞-norms, an upper bound on the spectral norm
inline double schur_bound(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    return std::max(a.cwiseAbs().colwise().sum().maxCoeff(), a.cwiseAbs().rowwise().sum().maxCoeff());
}

inline double unitarity_defect(const Matrix& U) {
    return schur_bound(U.adjoint() * U - Matrix::Identity(U.rows(), U.cols()));
}

// Dense check of U_s (K + V_s) U_s^{-1} = K + D(W_s) + (1 − D)(W_s − W_{s−1}) on modes |k| ≤ K_window.
class IdentityTracker {
public:
    IdentityTracker(SpectrumPtr sp, double omega, int K_trunc, int K_window)
        : sp_(std::move(sp)), K_trunc_(K_trunc), K_window_(K_window) {
        if (K_window < 0 || K_window > K_trunc) throw ConfigError("identity check: need 0 <= K_window <= K_trunc");
        Kd_ = k_diagonal(*sp_, K_trunc, omega);
        const Eigen::Index n = Kd_.size();
        U_ = Matrix::Identity(n, n);
        i0_ = dense_index(*sp_, K_trunc, -K_window, 0);
        nI_ = dense_dim(*sp_, K_window);
    }

    const Matrix& U() const { return U_; }
    int K_trunc() const { return K_trunc_; }
    int K_window() const { return K_window_; }

    void advance(const BlockOperator& A) { U_ = expm(to_dense(A, K_trunc_)) * U_; }

    double residual(const BlockOperator& V_s, const BlockOperator& W_s, const BlockOperator& W_prev) const {
        const Matrix UI = U_.middleRows(i0_, nI_);
        // ([U, K] U*)_II = (U K U* − K)_II, formed entrywise to avoid cancellation against K
        Matrix C = UI;
        for (Eigen::Index j = 0; j < C.cols(); ++j)
            for (Eigen::Index i = 0; i < C.rows(); ++i) C(i, j) *= (Kd_(j) - Kd_(i0_ + i));
        Matrix lhs = C * UI.adjoint();
        lhs.noalias() += (UI * to_dense(V_s, K_trunc_)) * UI.adjoint();
        const Matrix rhs = to_dense(W_s - off_diagonal_part(W_prev), K_trunc_).block(i0_, i0_, nI_, nI_);
        return schur_bound(lhs - rhs);
    }

    double unitarity() const { return unitarity_defect(U_); }

private:
    SpectrumPtr sp_;
    int K_trunc_, K_window_;
    RealVector Kd_;
    Matrix U_;
    Eigen::Index i0_ = 0, nI_ = 0;
};

// Recomputes U_s from the stored generators and checks the identity for the current stage.
inline double verify_identity(const IterationState& st, int K_trunc, int K_window) {
    IdentityTracker tr(st.W_cur.spectrum_ptr(), st.omega, K_trunc, K_window);
    for (const auto& A : st.A_list) tr.advance(A);
    return tr.residual(st.V_cur, st.W_cur, st.W_prev);
}

enum class RunStatus { Completed, Converged, Resonant };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Completed: return "completed";
        case RunStatus::Converged: return "converged";
        case RunStatus::Resonant: return "resonant";
    }
    return "?";
}

struct OracleComparison {
    int K_trunc = 0, K_window = 0;
    double max_error = 0, median_error = 0;
    double min_overlap = 1;
    bool injective = true;
    double unitarity = 0;
    std::vector<double> predicted, matched;
};

struct RunReport {
    double omega = 0;
    RunStatus status = RunStatus::Completed;
    int final_stage = 0;
    std::vector<StageDiagnostics> stages;
    std::optional<BlockIndex> witness;
    double witness_distance = 0, witness_psi = 0;
    std::vector<std::vector<double>> level_shifts;  // eig(h_m + W_0mm) per level
    std::vector<double> eigenvalues;                // kω + those, |k| ≤ K_window (or k = 0)
    std::optional<double> unitarity;
    std::optional<OracleComparison> oracle;
};

inline std::vector<std::vector<double>> level_shifts(const IterationState& st) {
    std::vector<std::vector<double>> out;
    const Spectrum& sp = st.W_cur.spectrum();
    for (int m = 0; m < sp.size(); ++m) {
        const RealVector e = hermitian_eigenvalues(st.W_cur.block({0, m, m}, 0));
        std::vector<double> v;
        for (Eigen::Index i = 0; i < e.size(); ++i) v.push_back(sp.level(m) + e(i));
        out.push_back(v);
    }
    return out;
}

inline int default_window(const Schedule& sch, int K_trunc) {
    return std::max(0, K_trunc - static_cast<int>(std::ceil(sch.E(sch.S_max()))));
}

struct RunResult {
    RunReport report;
    IterationState state;
    std::optional<IdentityTracker> tracker;
};

inline RunResult run_detailed(double omega, const KamProblem& pb, const EngineConfig& cfg = {}) {
    const Schedule& sch = pb.sched;
    const BlockOperator V_full = constant_on(pb.V, single_point_grid(omega));
    RunResult rr{{}, init_state(pb, omega), std::nullopt};
    auto& st = rr.state;
    auto& rep = rr.report;
    rep.omega = omega;
    if (cfg.K_verify > 0) {
        const int win = cfg.K_window >= 0 ? cfg.K_window : default_window(sch, cfg.K_verify);
        rr.tracker.emplace(st.W_cur.spectrum_ptr(), omega, cfg.K_verify, win);
    }
    auto check_identity = [&] {
        if (rr.tracker) st.diagnostics.back().identity_residual = rr.tracker->residual(st.V_cur, st.W_cur, st.W_prev);
    };
    check_identity();
    while (true) {
        if (st.s >= sch.S_max()) break;
        if (v_bound(sch, st.s + 1).v < cfg.v_floor) {
            rep.status = RunStatus::Converged;
            break;
        }
        try {
            iterate_step(st, V_full, pb, cfg);
        } catch (const ResonanceError& e) {
            rep.status = RunStatus::Resonant;
            rep.witness = e.witness();
            rep.witness_distance = e.distance();
            rep.witness_psi = e.psi();
            break;
        }
        if (rr.tracker) rr.tracker->advance(st.A_list.back());
        check_identity();
    }
    rep.final_stage = st.s;
    rep.stages = st.diagnostics;
    if (rep.status != RunStatus::Resonant) {
        rep.level_shifts = level_shifts(st);
        const int Kw = rr.tracker ? rr.tracker->K_window() : 0;
        for (int k = -Kw; k <= Kw; ++k)
            for (const auto& lv : rep.level_shifts)
                for (double e : lv) rep.eigenvalues.push_back(k * omega + e);
        std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end());
        if (rr.tracker) rep.unitarity = rr.tracker->unitarity();
    }
    return rr;
}

inline RunReport run(double omega, const KamProblem& pb, const EngineConfig& cfg = {}) {
    return run_detailed(omega, pb, cfg).report;
}

// Dense diagonalization of K + V_S, matched to the predicted states U_S^* (e_k ⊗ eigvec(W_0mm)).
inline OracleComparison oracle_compare(const IterationState& st, const Matrix& U, int K_trunc, int K_window) {
    const Spectrum& sp = st.W_cur.spectrum();
    const Eigen::Index n = dense_dim(sp, K_trunc);
    if (U.rows() != n) throw UsageError("oracle_compare: U does not match the basis");
    Matrix H = to_dense(st.V_cur, K_trunc);
    H.diagonal() += k_diagonal(sp, K_trunc, st.omega).cast<cplx>();
    const HermitianEig oracle = hermitian_eig(H);

    // rotate each (k, m) block into the eigenbasis of h_m + W_0mm
    Matrix R = Matrix::Zero(n, n);
    RealVector pred(n);
    for (int m = 0; m < sp.size(); ++m) {
        const HermitianEig e = hermitian_eig(st.W_cur.block({0, m, m}, 0));
        for (int k = -K_trunc; k <= K_trunc; ++k) {
            const auto i = dense_index(sp, K_trunc, k, m);
            R.block(i, i, sp.mult(m), sp.mult(m)) = e.vectors;
            for (int j = 0; j < sp.mult(m); ++j) pred(i + j) = k * st.omega + sp.level(m) + e.values(j);
        }
    }
    const auto i0 = dense_index(sp, K_trunc, -K_window, 0);
    const auto nI = dense_dim(sp, K_window);
    const Matrix M = (R.adjoint() * U).middleRows(i0, nI) * oracle.vectors;

    OracleComparison out;
    out.K_trunc = K_trunc;
    out.K_window = K_window;
    out.unitarity = unitarity_defect(U);
    std::vector<double> errs;
    std::vector<Eigen::Index> used;
    for (Eigen::Index i = 0; i < nI; ++i) {
        Eigen::Index j = 0;
        const double ov = M.row(i).cwiseAbs().maxCoeff(&j);
        out.min_overlap = std::min(out.min_overlap, ov);
        used.push_back(j);
        out.predicted.push_back(pred(i0 + i));
        out.matched.push_back(oracle.values(j));
        errs.push_back(std::abs(pred(i0 + i) - oracle.values(j)));
    }
    std::sort(used.begin(), used.end());
    out.injective = std::adjacent_find(used.begin(), used.end()) == used.end();
    if (!errs.empty()) {
        out.max_error = *std::max_element(errs.begin(), errs.end());
        std::nth_element(errs.begin(), errs.begin() + static_cast<long>(errs.size() / 2), errs.end());
        out.median_error = errs[errs.size() / 2];
    }
    return out;
}

inline nlohmann::json to_json(const StageDiagnostics& d) {
    nlohmann::json j{{"s", d.s},
                     {"w_s", d.w},
                     {"v_s", d.v},
                     {"a_norm", d.a_norm},
                     {"gamma_ratio", d.gamma_ratio},
                     {"gamma_bound", d.gamma_bound},
                     {"gamma_bound_ok", d.gamma_bound_ok},
                     {"exclusion_hypotheses", d.exclusion_hypotheses},
                     {"contraction_ok", d.contraction_ok},
                     {"W_symmetry_defect", d.W_symmetry_defect},
                     {"A_symmetry_defect", d.A_symmetry_defect},
                     {"max_diag_norm", d.max_diag_norm}};
    j["identity_residual"] = d.identity_residual ? nlohmann::json(*d.identity_residual) : nlohmann::json(nullptr);
    return j;
}

inline nlohmann::json to_json(const RunReport& r) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& d : r.stages) stages.push_back(to_json(d));
    nlohmann::json j{{"omega", r.omega},
                     {"status", to_string(r.status)},
                     {"final_stage", r.final_stage},
                     {"stages", stages},
                     {"level_shifts", r.level_shifts},
                     {"eigenvalues", r.eigenvalues}};
    if (r.witness) {
        j["witness"] = {{"index", {r.witness->k, r.witness->n, r.witness->m}},
                        {"distance", r.witness_distance},
                        {"psi", r.witness_psi}};
    }
    j["unitarity_defect"] = r.unitarity ? nlohmann::json(*r.unitarity) : nlohmann::json(nullptr);
    if (r.oracle) {
        j["oracle_eigenvalues"] = r.oracle->matched;
        j["max_eig_error"] = r.oracle->max_error;
        j["median_eig_error"] = r.oracle->median_error;
        j["min_overlap"] = r.oracle->min_overlap;
        j["oracle_matching_injective"] = r.oracle->injective;
    } else {
        j["oracle_eigenvalues"] = nullptr;
        j["max_eig_error"] = nullptr;
    }
    return j;
}

}  // namespace floquet_kam
