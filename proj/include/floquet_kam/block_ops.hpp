#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floquet_kam/linalg.hpp"

namespace floquet_kam {

// Unperturbed levels h_m with multiplicities M_m. Level indices are 0-based.
class Spectrum {
public:
    Spectrum(std::vector<double> levels, std::vector<int> mults)
        : levels_(std::move(levels)), mults_(std::move(mults)) {
        if (levels_.empty()) throw ConfigError("Spectrum: no levels");
        if (levels_.size() != mults_.size()) throw ConfigError("Spectrum: levels and mults differ in length");
        for (std::size_t i = 0; i < levels_.size(); ++i) {
            if (!std::isfinite(levels_[i])) throw ConfigError("Spectrum: non-finite level");
            if (mults_[i] < 1) throw ConfigError("Spectrum: multiplicity must be >= 1");
            if (i > 0 && !(levels_[i] > levels_[i - 1]))
                throw ConfigError("Spectrum: levels must be strictly increasing");
        }
        offsets_.resize(mults_.size() + 1, 0);
        std::partial_sum(mults_.begin(), mults_.end(), offsets_.begin() + 1);
    }

    int size() const { return static_cast<int>(levels_.size()); }
    double level(int m) const { return levels_.at(static_cast<std::size_t>(m)); }
    int mult(int m) const { return mults_.at(static_cast<std::size_t>(m)); }
    const std::vector<double>& levels() const { return levels_; }
    const std::vector<int>& mults() const { return mults_; }

    // Δ_mn = h_m − h_n
    double gap(int m, int n) const { return level(m) - level(n); }

    double delta0() const {
        double d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i < levels_.size(); ++i) d = std::min(d, levels_[i] - levels_[i - 1]);
        return d;
    }

    double mu(int m, int n) const {
        const double mm = mult(m), mn = mult(n);
        return std::sqrt(std::min(mm, mn)) * mm * mn;
    }

    int total_dim() const { return offsets_.back(); }
    int offset(int m) const { return offsets_.at(static_cast<std::size_t>(m)); }

    bool operator==(const Spectrum& o) const { return levels_ == o.levels_ && mults_ == o.mults_; }

private:
    std::vector<double> levels_;
    std::vector<int> mults_;
    std::vector<int> offsets_;
};

using SpectrumPtr = std::shared_ptr<const Spectrum>;
using OmegaGrid = std::shared_ptr<const std::vector<double>>;

inline OmegaGrid make_grid(std::vector<double> omegas) {
    if (omegas.empty()) throw ConfigError("grid must contain at least one point");
    for (std::size_t i = 1; i < omegas.size(); ++i)
        if (!(omegas[i] > omegas[i - 1])) throw ConfigError("grid must be strictly increasing");
    return std::make_shared<const std::vector<double>>(std::move(omegas));
}

inline OmegaGrid single_point_grid(double omega) { return make_grid({omega}); }

class BlockOperator {
public:
    using Samples = std::vector<Matrix>;  // one matrix per grid point
    using Map = std::map<BlockIndex, Samples>;

    BlockOperator(SpectrumPtr spectrum, OmegaGrid grid) : spectrum_(std::move(spectrum)), grid_(std::move(grid)) {
        if (!spectrum_ || !grid_ || grid_->empty()) throw UsageError("BlockOperator: spectrum and grid required");
    }

    const Spectrum& spectrum() const { return *spectrum_; }
    const SpectrumPtr& spectrum_ptr() const { return spectrum_; }
    const OmegaGrid& grid() const { return grid_; }
    std::size_t grid_size() const { return grid_->size(); }
    int k_store() const { return k_store_; }
    void set_k_store(int k) { k_store_ = std::max(k_store_, k); }
    const Map& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    void set(const BlockIndex& idx, Samples samples) {
        check_index(idx);
        if (samples.size() != grid_size()) throw UsageError("BlockOperator::set: sample count differs from grid size");
        for (const auto& s : samples) check_shape(idx, s);
        k_store_ = std::max(k_store_, std::abs(idx.k));
        entries_[idx] = std::move(samples);
    }

    // ω-independent block
    void set(const BlockIndex& idx, const Matrix& value) { set(idx, Samples(grid_size(), value)); }

    void add(const BlockIndex& idx, std::size_t w, const Matrix& value) {
        check_index(idx);
        check_shape(idx, value);
        auto it = entries_.find(idx);
        if (it == entries_.end()) {
            Samples z(grid_size(), Matrix::Zero(spectrum_->mult(idx.n), spectrum_->mult(idx.m)));
            it = entries_.emplace(idx, std::move(z)).first;
            k_store_ = std::max(k_store_, std::abs(idx.k));
        }
        it->second.at(w) += value;
    }

    const Samples* find(const BlockIndex& idx) const {
        auto it = entries_.find(idx);
        return it == entries_.end() ? nullptr : &it->second;
    }

    Matrix block(const BlockIndex& idx, std::size_t w) const {
        if (const auto* s = find(idx)) return s->at(w);
        return Matrix::Zero(spectrum_->mult(idx.n), spectrum_->mult(idx.m));
    }

    // Remove blocks whose every sample has max-abs entry <= tol.
    void prune(double tol = 0.0) {
        for (auto it = entries_.begin(); it != entries_.end();) {
            bool tiny = true;
            for (const auto& s : it->second)
                if (s.size() > 0 && s.cwiseAbs().maxCoeff() > tol) { tiny = false; break; }
            it = tiny ? entries_.erase(it) : std::next(it);
        }
    }

    int max_abs_k() const {
        int k = 0;
        for (const auto& [idx, _] : entries_) k = std::max(k, std::abs(idx.k));
        return k;
    }

    // Same ω-structure, no blocks.
    BlockOperator zero_like() const { return BlockOperator(spectrum_, grid_); }

    bool compatible(const BlockOperator& o) const {
        const bool same_spec = spectrum_ == o.spectrum_ || *spectrum_ == *o.spectrum_;
        const bool same_grid = grid_ == o.grid_ || *grid_ == *o.grid_;
        return same_spec && same_grid;
    }

private:
    void check_index(const BlockIndex& idx) const {
        if (idx.n < 0 || idx.n >= spectrum_->size() || idx.m < 0 || idx.m >= spectrum_->size())
            throw UsageError("BlockOperator: level index out of range in " + to_string(idx));
    }
    void check_shape(const BlockIndex& idx, const Matrix& a) const {
        if (a.rows() != spectrum_->mult(idx.n) || a.cols() != spectrum_->mult(idx.m))
            throw UsageError("BlockOperator: block " + to_string(idx) + " has wrong shape");
    }

    SpectrumPtr spectrum_;
    OmegaGrid grid_;
    Map entries_;
    int k_store_ = 0;
};

namespace detail {
inline void require_compatible(const BlockOperator& a, const BlockOperator& b, const char* what) {
    if (!a.compatible(b)) throw UsageError(std::string(what) + ": operands differ in grid or spectrum");
}
}  // namespace detail

inline BlockOperator axpy(cplx alpha, const BlockOperator& x, const BlockOperator& y) {
    detail::require_compatible(x, y, "axpy");
    BlockOperator out = y;
    for (const auto& [idx, samples] : x.entries())
        for (std::size_t w = 0; w < samples.size(); ++w) out.add(idx, w, alpha * samples[w]);
    out.set_k_store(x.k_store());
    return out;
}

inline BlockOperator operator+(const BlockOperator& a, const BlockOperator& b) { return axpy(1.0, b, a); }
inline BlockOperator operator-(const BlockOperator& a, const BlockOperator& b) { return axpy(-1.0, b, a); }

inline BlockOperator operator*(cplx alpha, const BlockOperator& x) {
    BlockOperator out = x.zero_like();
    for (const auto& [idx, samples] : x.entries()) {
        BlockOperator::Samples s = samples;
        for (auto& a : s) a *= alpha;
        out.set(idx, std::move(s));
    }
    out.set_k_store(x.k_store());
    return out;
}

// (UV)_{knm} = Σ_{ℓ,p} U_{k−ℓ,n,p} V_{ℓ,p,m}
inline BlockOperator block_product(const BlockOperator& u, const BlockOperator& v) {
    detail::require_compatible(u, v, "block_product");
    const Spectrum& sp = u.spectrum();
    std::vector<std::vector<const BlockOperator::Map::value_type*>> v_by_row(static_cast<std::size_t>(sp.size()));
    for (const auto& e : v.entries()) v_by_row[static_cast<std::size_t>(e.first.n)].push_back(&e);

    BlockOperator out = u.zero_like();
    const std::size_t nw = u.grid_size();
    for (const auto& [ui, us] : u.entries()) {
        for (const auto* ve : v_by_row[static_cast<std::size_t>(ui.m)]) {
            const auto& [vi, vs] = *ve;
            const BlockIndex target{ui.k + vi.k, ui.n, vi.m};
            for (std::size_t w = 0; w < nw; ++w) {
                if (us[w].cols() != vs[w].rows())
                    throw UsageError("block_product: inner dimensions differ at " + to_string(ui) + " x " + to_string(vi));
                out.add(target, w, us[w] * vs[w]);
            }
        }
    }
    out.set_k_store(u.k_store() + v.k_store());
    return out;
}

inline BlockOperator commutator(const BlockOperator& a, const BlockOperator& b) {
    return block_product(a, b) - block_product(b, a);
}

// sup over adjacent grid pairs (both orderings) and n of
// Σ_{k,m} (‖X(ω)‖ + φ‖∂X(ω,ω')‖) e^{|k|/E}.  E = +inf gives unit weights.
inline double weighted_norm(const BlockOperator& x, double phi, double E) {
    if (x.empty()) return 0.0;
    const std::size_t nw = x.grid_size();
    const auto& grid = *x.grid();
    const int nl = x.spectrum().size();
    auto weight = [E](int k) { return std::isinf(E) ? 1.0 : std::exp(std::abs(k) / E); };

    if (nw == 1) {
        std::vector<double> rows(static_cast<std::size_t>(nl), 0.0);
        for (const auto& [idx, s] : x.entries()) rows[static_cast<std::size_t>(idx.n)] += spectral_norm(s[0]) * weight(idx.k);
        return *std::max_element(rows.begin(), rows.end());
    }

    // rows_at[w][n] = Σ ‖X(ω_w)‖ e^{|k|/E};  drows[i][n] = Σ ‖∂X(ω_i,ω_{i+1})‖ e^{|k|/E}
    std::vector<std::vector<double>> rows_at(nw, std::vector<double>(static_cast<std::size_t>(nl), 0.0));
    std::vector<std::vector<double>> drows(nw - 1, std::vector<double>(static_cast<std::size_t>(nl), 0.0));
    for (const auto& [idx, s] : x.entries()) {
        const double wk = weight(idx.k);
        const auto n = static_cast<std::size_t>(idx.n);
        for (std::size_t w = 0; w < nw; ++w) rows_at[w][n] += spectral_norm(s[w]) * wk;
        for (std::size_t w = 0; w + 1 < nw; ++w)
            drows[w][n] += spectral_norm((s[w] - s[w + 1]) / (grid[w] - grid[w + 1])) * wk;
    }
    double best = 0.0;
    for (std::size_t w = 0; w + 1 < nw; ++w)
        for (std::size_t n = 0; n < static_cast<std::size_t>(nl); ++n) {
            const double d = phi * drows[w][n];
            best = std::max({best, rows_at[w][n] + d, rows_at[w + 1][n] + d});
        }
    return best;
}

// max of row-sup and column-sup block sums at grid point w
inline double schur_holmgren_norm(const BlockOperator& x, std::size_t w = 0) {
    if (x.empty()) return 0.0;
    const auto nl = static_cast<std::size_t>(x.spectrum().size());
    std::vector<double> rows(nl, 0.0), cols(nl, 0.0);
    for (const auto& [idx, s] : x.entries()) {
        const double a = spectral_norm(s.at(w));
        rows[static_cast<std::size_t>(idx.n)] += a;
        cols[static_cast<std::size_t>(idx.m)] += a;
    }
    return std::max(*std::max_element(rows.begin(), rows.end()), *std::max_element(cols.begin(), cols.end()));
}

inline BlockOperator diagonal_part(const BlockOperator& x) {
    BlockOperator out = x.zero_like();
    for (const auto& [idx, s] : x.entries())
        if (idx.is_diagonal()) out.set(idx, s);
    return out;
}

inline BlockOperator off_diagonal_part(const BlockOperator& x) {
    BlockOperator out = x.zero_like();
    for (const auto& [idx, s] : x.entries())
        if (!idx.is_diagonal()) out.set(idx, s);
    out.set_k_store(x.k_store());
    return out;
}

// max over stored indices and grid points of ‖X_{knm}* − sign·X_{−k,m,n}‖
inline double symmetry_defect(const BlockOperator& x, double sign) {
    double d = 0.0;
    for (const auto& [idx, s] : x.entries()) {
        const auto* adj = x.find(idx.adjoint());
        for (std::size_t w = 0; w < s.size(); ++w) {
            const Matrix lhs = s[w].adjoint();
            d = std::max(d, adj ? spectral_norm(lhs - sign * (*adj)[w]) : spectral_norm(lhs));
        }
    }
    return d;
}

inline double hermitian_symmetry_defect(const BlockOperator& x) { return symmetry_defect(x, 1.0); }
inline double anti_hermitian_symmetry_defect(const BlockOperator& x) { return symmetry_defect(x, -1.0); }

inline bool hermitian_symmetry_check(const BlockOperator& x, double tol) { return hermitian_symmetry_defect(x) <= tol; }
inline bool anti_hermitian_symmetry_check(const BlockOperator& x, double tol) {
    return anti_hermitian_symmetry_defect(x) <= tol;
}

// Row of basis vector (k, m, i) in the truncated dense basis.
inline Eigen::Index dense_index(const Spectrum& sp, int K_trunc, int k, int m, int i = 0) {
    return static_cast<Eigen::Index>(k + K_trunc) * sp.total_dim() + sp.offset(m) + i;
}

inline Eigen::Index dense_dim(const Spectrum& sp, int K_trunc) {
    return static_cast<Eigen::Index>(2 * K_trunc + 1) * sp.total_dim();
}

// Entry (ℓ,n)←(k,m) is X_{ℓ−k,n,m}(ω_w).
inline Matrix to_dense(const BlockOperator& x, int K_trunc, std::size_t w = 0) {
    const Spectrum& sp = x.spectrum();
    const Eigen::Index dim = dense_dim(sp, K_trunc);
    Matrix out = Matrix::Zero(dim, dim);
    for (const auto& [idx, s] : x.entries()) {
        const Matrix& b = s.at(w);
        for (int k = -K_trunc; k <= K_trunc; ++k) {
            const int l = k + idx.k;
            if (l < -K_trunc || l > K_trunc) continue;
            out.block(dense_index(sp, K_trunc, l, idx.n), dense_index(sp, K_trunc, k, idx.m), b.rows(), b.cols()) = b;
        }
    }
    return out;
}

// Broadcast an operator sampled at one point onto a new grid.
inline BlockOperator constant_on(const BlockOperator& x, const OmegaGrid& grid) {
    if (x.grid_size() != 1) throw UsageError("constant_on: source must be sampled at a single point");
    BlockOperator out(x.spectrum_ptr(), grid);
    for (const auto& [idx, s] : x.entries()) out.set(idx, s[0]);
    out.set_k_store(x.k_store());
    return out;
}

// Restrict to grid point w (as a single-point operator).
inline BlockOperator at_point(const BlockOperator& x, std::size_t w) {
    BlockOperator out(x.spectrum_ptr(), single_point_grid(x.grid()->at(w)));
    for (const auto& [idx, s] : x.entries()) out.set(idx, s.at(w));
    out.set_k_store(x.k_store());
    return out;
}

inline nlohmann::json to_json(const BlockOperator& x) {
    using nlohmann::json;
    json blocks = json::array();
    for (const auto& [idx, s] : x.entries()) {
        for (std::size_t w = 0; w < s.size(); ++w) {
            json mat = json::array();
            for (Eigen::Index r = 0; r < s[w].rows(); ++r)
                for (Eigen::Index c = 0; c < s[w].cols(); ++c) mat.push_back({s[w](r, c).real(), s[w](r, c).imag()});
            blocks.push_back({{"index", {idx.k, idx.n, idx.m}}, {"omega_index", w}, {"matrix", mat}});
        }
    }
    return {{"grid", *x.grid()},
            {"levels", x.spectrum().levels()},
            {"mults", x.spectrum().mults()},
            {"K_store", x.k_store()},
            {"blocks", blocks}};
}

inline BlockOperator block_operator_from_json(const nlohmann::json& j) {
    try {
        auto sp = std::make_shared<const Spectrum>(j.at("levels").get<std::vector<double>>(),
                                                   j.at("mults").get<std::vector<int>>());
        BlockOperator out(sp, make_grid(j.at("grid").get<std::vector<double>>()));
        for (const auto& b : j.at("blocks")) {
            const auto ix = b.at("index").get<std::vector<int>>();
            if (ix.size() != 3) throw ConfigError("block index must have three entries");
            const BlockIndex idx{ix[0], ix[1], ix[2]};
            const auto w = b.at("omega_index").get<std::size_t>();
            if (w >= out.grid_size()) throw ConfigError("omega_index out of range");
            if (idx.n < 0 || idx.n >= sp->size() || idx.m < 0 || idx.m >= sp->size())
                throw ConfigError("block level index out of range");
            const int rows = sp->mult(idx.n), cols = sp->mult(idx.m);
            const auto& mat = b.at("matrix");
            if (static_cast<int>(mat.size()) != rows * cols) throw ConfigError("block matrix has wrong entry count");
            Matrix a(rows, cols);
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c) {
                    const auto& e = mat.at(static_cast<std::size_t>(r * cols + c));
                    a(r, c) = cplx(e.at(0).get<double>(), e.at(1).get<double>());
                }
            out.add(idx, w, a);
        }
        if (j.contains("K_store")) out.set_k_store(j.at("K_store").get<int>());
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("BlockOperator JSON: ") + e.what());
    }
}

}  // namespace floquet_kam
