// Acceptance checks for the desk-scale preset. One PASS/FAIL line per criterion.
//   acceptance            run all nine
//   acceptance --only 5   run one (ctest registers each separately)

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "floquet_kam/cli.hpp"
#include "oracles.hpp"

using namespace floquet_kam;

namespace {

constexpr double pi = std::numbers::pi;
constexpr double e = std::numbers::e;

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---- shared desk-preset state -------------------------------------------------

const cli::RunConfig& desk_config() {
    static const cli::RunConfig c;  // square well, cos drive, M_max 6, r 4, σ 2, ε_V = ε★/2, S_max 5
    return c;
}

const cli::Setup& desk() {
    static const cli::Setup s = cli::build_setup(desk_config());
    return s;
}

const cli::SweepResult& desk_sweep() {
    static const cli::SweepResult r = cli::sweep(*desk().problem, desk().J, desk_config().grid_points);
    return r;
}

// a surviving frequency near the middle of the surviving set
double surviving_omega() {
    const auto& g = desk_sweep().grid;
    std::vector<double> good;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.status(i).state == PointState::Good) good.push_back(g.points()[i]);
    if (good.empty()) throw std::runtime_error("no surviving frequency in the sweep");
    return good[good.size() / 2];
}

int desk_K() { return cli::k_work(desk_config(), desk().problem->sched); }

const RunResult& desk_run(int K, int Kw) {
    static std::vector<std::pair<std::pair<int, int>, std::unique_ptr<RunResult>>> cache;
    for (const auto& [key, r] : cache)
        if (key == std::make_pair(K, Kw)) return *r;
    EngineConfig cfg;
    cfg.K_verify = K;
    cfg.K_window = Kw;
    cache.emplace_back(std::make_pair(K, Kw), std::make_unique<RunResult>(run_detailed(surviving_omega(), *desk().problem, cfg)));
    return *cache.back().second;
}

// ---- criteria ----------------------------------------------------------------

// ε★ and δ★ against closed forms written out for q^r = e², α = 2
Outcome c1() {
    bool ok = true;
    std::string detail;
    for (double r : {3.0, 4.0, 6.0}) {
        cli::RunConfig c = desk_config();
        c.r = r;
        const auto j = cli::constants_report(c);
        const double D0 = j["Delta0"], J = j["J"], sigma = c.sigma;
        const double eps_ref = std::min(4 * D0, J) / (270 * std::pow(e, 3));
        const double z = std::exp(-2 + (2 / r) * (sigma + 0.5));
        const double ds = delta_sigma(*desk().spectrum, sigma, J).value;
        const double dstar_ref = 1440 * std::pow((2 * sigma + 1) / ((1 - std::exp(-2 / r)) * e), sigma + 0.5) *
                                 std::pow(2.0, sigma) * std::exp(3 + (2 / r) * (sigma + 0.5)) * (1 + z) /
                                 std::pow(1 - z, 3) * ds;
        const double re = std::abs(j["eps_star"].get<double>() / eps_ref - 1);
        const double rd = std::abs(j["delta_star"].get<double>() / dstar_ref - 1);
        ok = ok && re <= 1e-12 && rd <= 1e-10;
        detail += fmt("r=%g eps_star=%.12g (rel %.1e) delta_star=%.12g (rel %.1e); ", r, j["eps_star"].get<double>(), re,
                      j["delta_star"].get<double>(), rd);
    }
    return {ok, detail};
}

Outcome c2() {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> dim(1, 5);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    int residual_ok = 0, cert_ok = 0, contour_ok = 0, contour_cases = 0, pairs = 0;
    double worst_res = 0, worst_contour = 0;
    while (pairs < 500) {
        std::vector<double> a(static_cast<std::size_t>(dim(rng))), b(static_cast<std::size_t>(dim(rng)));
        for (auto& x : a) x = U(rng);
        for (auto& x : b) x = U(rng);
        if (pairs % 2 == 0)  // half of the cases separated by a shift
            for (auto& x : b) x += 7.0;
        if (oracle::pairwise_distance(a, b) < 0.1) continue;
        ++pairs;
        const Matrix A = oracle::hermitian_with_spectrum(rng, a), B = oracle::hermitian_with_spectrum(rng, b);
        const Matrix V = oracle::random_matrix(rng, A.rows(), B.rows());
        const HermitianPair p(A, B);
        const Matrix W = solve_commutation(p, V);
        const double scale = std::max(1.0, spectral_norm(A) * spectral_norm(W) + spectral_norm(W) * spectral_norm(B) + spectral_norm(V));
        const double res = spectral_norm(A * W - W * B - V) / scale;
        worst_res = std::max(worst_res, res);
        residual_ok += res <= 1e-10;
        cert_ok += spectral_norm(W) <= norm_certificate(p, V).bound * (1 + 1e-12);
        if (contour_cases < 50 && p.interlacing() == Interlacing::NonInterlaced) {
            ++contour_cases;
            const double err = oracle::max_abs(W - oracle::contour_sylvester(A, B, V, p.distance())) / std::max(1.0, oracle::max_abs(W));
            worst_contour = std::max(worst_contour, err);
            contour_ok += err <= 1e-8;
        }
    }
    const bool ok = residual_ok == 500 && cert_ok == 500 && contour_cases == 50 && contour_ok == 50;
    return {ok, fmt("residual %d/500 (worst %.1e), certificate %d/500, contour %d/%d (worst %.1e)", residual_ok, worst_res,
                    cert_ok, contour_ok, contour_cases, worst_contour)};
}

Outcome c3() {
    std::mt19937_64 rng(303);
    std::uniform_int_distribution<int> L(1, 4), Kst(0, 4);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const auto grid = make_grid({1.0, 1.2, 1.5});
    int fails = 0;
    double worst_dense = 0;
    for (int t = 0; t < 100; ++t) {
        const auto sp = oracle::random_spectrum(rng, L(rng), 3);
        const int KX = Kst(rng), KY = Kst(rng);
        const auto X = oracle::random_operator(rng, sp, grid, KX, 0.6);
        const auto Y = oracle::random_operator(rng, sp, grid, KY, 0.6);
        const BlockOperator P = block_product(X, Y);
        // φ at least the grid spacing, the regime where the pair-difference seminorm obeys the product rule
        const double phi = 0.3 + 1.7 * U(rng), E = 0.5 + 5 * U(rng);
        const double tol = 1e-12;
        auto le = [&](double lhs, double rhs) { return lhs <= rhs * (1 + tol) + tol; };
        bool ok = le(weighted_norm(P, phi, E), weighted_norm(X, phi, E) * weighted_norm(Y, phi, E));
        for (std::size_t w = 0; w < grid->size(); ++w)
            ok = ok && le(schur_holmgren_norm(P, w), schur_holmgren_norm(X, w) * schur_holmgren_norm(Y, w));
        ok = ok && le(weighted_norm(diagonal_part(X), phi, E), weighted_norm(X, phi, E));
        ok = ok && le(weighted_norm(off_diagonal_part(X), phi, E), weighted_norm(X, phi, E));
        const int K = 12, Kw = K - std::max(KX, KY);
        const auto i0 = dense_index(*sp, K, -Kw, 0);
        const auto n = dense_dim(*sp, Kw);
        for (std::size_t w = 0; w < grid->size(); ++w) {
            const Matrix lhs = to_dense(P, K, w).block(i0, i0, n, n);
            const Matrix rhs = (to_dense(X, K, w) * to_dense(Y, K, w)).block(i0, i0, n, n);
            const double d = oracle::max_abs(lhs - rhs);
            worst_dense = std::max(worst_dense, d);
            ok = ok && d <= 1e-12;
        }
        fails += !ok;
    }
    return {fails == 0, fmt("%d/100 pairs pass (worst dense mismatch %.1e)", 100 - fails, worst_dense)};
}

Outcome c4() {
    const auto& r = desk_sweep();
    const auto& g = r.grid;
    const double frac = double(g.count(PointState::Good)) / double(g.size());
    std::string surv;
    for (int n : r.survivors) surv += std::to_string(n) + " ";
    const bool ok = frac >= 0.9 && r.contraction_violations == 0;
    return {ok, fmt("completed %zu/%zu (%.1f%%, need 90%%); survivors per stage [ %s]; w_s > 3 v_s on %d stages",
                    g.count(PointState::Good), g.size(), 100 * frac, surv.c_str(), r.contraction_violations)};
}

Outcome c5() {
    const int K = desk_K();
    const int Kw = K - static_cast<int>(std::ceil(desk().problem->sched.E(desk().problem->sched.S_max())));
    const RunResult& a = desk_run(K, Kw);
    const RunResult& b = desk_run(2 * K, Kw);
    if (a.report.status == RunStatus::Resonant) return {false, "run aborted on resonance"};
    double worst = 0;
    bool decrease = true;
    std::string detail = fmt("omega=%.10g K=%d/%d window %d; residuals", a.report.omega, K, 2 * K, Kw);
    for (std::size_t s = 0; s < a.report.stages.size(); ++s) {
        const double ra = *a.report.stages[s].identity_residual, rb = *b.report.stages[s].identity_residual;
        worst = std::max(worst, ra);
        // stage 0 is exact in both bases; elsewhere require a 10× drop
        if (!(ra == 0 && rb == 0) && !(rb * 10 <= ra)) decrease = false;
        detail += fmt(" s%zu %.2e->%.2e", s, ra, rb);
    }
    return {worst <= 1e-6 && decrease, detail + fmt("; max %.2e, 10x decrease %s", worst, decrease ? "yes" : "no")};
}

Outcome c6() {
    const int K = desk_K();
    const int Kw = K - static_cast<int>(std::ceil(desk().problem->sched.E(desk().problem->sched.S_max())));
    const auto basis = dense_dim(desk().problem->spectrum(), K);
    const RunResult& rr = desk_run(K, Kw);
    if (rr.report.status == RunStatus::Resonant) return {false, "run aborted on resonance"};
    const auto oc = oracle_compare(rr.state, rr.tracker->U(), K, Kw);
    const double v5 = v_bound(desk().problem->sched, desk().problem->sched.S_max()).v;
    const double tol = std::max(10 * v5, 1e-8);
    const bool ok = basis <= 1500 && oc.max_error <= tol && oc.unitarity <= 1e-8 && oc.injective;
    return {ok, fmt("omega=%.10g basis %ld window %d: max error %.2e (tol %.2e), median %.2e, unitarity %.1e, min overlap %.3f",
                    rr.report.omega, static_cast<long>(basis), Kw, oc.max_error, tol, oc.median_error, oc.unitarity, oc.min_overlap)};
}

Outcome c7() {
    const auto& g = desk_sweep().grid;
    const cli::RunConfig& c = desk_config();
    const double dstar = delta_one(c.sigma, c.r, c.alpha, desk().q) * delta_sigma(*desk().spectrum, c.sigma, desk().J).value;
    const double epsV = desk().problem->sched.eps_V();
    const double allowance = dstar * epsV + g.excluded_intervals() * g.cell_width();
    const bool ok = g.bad_measure() <= allowance;
    return {ok, fmt("bad measure %.6g <= delta_star*eps_V %.6g + %d intervals x %.4g cell", g.bad_measure(), dstar * epsV,
                    g.excluded_intervals(), g.cell_width())};
}

Outcome c8() {
    const auto an = rotor_an_check(1, 2000);
    const double an_ref = pi * pi / 6 + 1.0 / 8 - 0.5;
    const double an_err = std::abs(an.series - an_ref);
    double brute = 0;
    for (int s = 200; s >= 1; --s) brute += s * s * std::exp(-2.0 * s);
    const double li_ref = std::cosh(1.0) / (4 * std::pow(std::sinh(1.0), 3));
    const double li = polylog_neg(2.0, std::exp(-2.0));
    const double li_err = std::max(std::abs(li - li_ref), std::abs(brute - li_ref));
    const double z0 = 0.37;
    SquareWellModel m{{{0, cplx(z0)}}, 6, 0};
    const double v011 = square_well_blocks(m).block({0, 0, 0}, 0)(0, 0).real() / z0;
    const double sw_err = std::abs(v011 - (1.0 / 3 - 1 / (2 * pi * pi)));
    const bool ok = an_err <= 1e-6 && li_err <= 1e-10 && std::abs(li_ref - 0.23768) < 1e-5 && sw_err <= 1e-15;
    return {ok, fmt("a_1 err %.1e, Li_{-2}(e^-2) = %.12f err %.1e, V_011/z_0 err %.1e", an_err, li, li_err, sw_err)};
}

Outcome c9() {
    double worst = desk_sweep().max_symmetry_defect;
    int stages = 0;
    for (const auto& st : desk_sweep().states)
        if (st) {
            stages += static_cast<int>(st->diagnostics.size());
            for (const auto& d : st->diagnostics) worst = std::max({worst, d.W_symmetry_defect, d.A_symmetry_defect});
            for (const auto& A : st->A_list) worst = std::max(worst, anti_hermitian_symmetry_defect(A));
        }
    // a smooth drive exercises many Fourier modes
    cli::RunConfig c = desk_config();
    c.model = cli::json{{"model", "square_well"}, {"drive", "smooth"}, {"K_max", 12}, {"smoothness", 4.0}, {"M_max", 4}};
    const cli::Setup s = cli::build_setup(c);
    const auto sw = cli::sweep(*s.problem, s.J, 21);
    worst = std::max(worst, sw.max_symmetry_defect);
    for (const auto& st : sw.states)
        if (st)
            for (const auto& d : st->diagnostics) worst = std::max({worst, d.W_symmetry_defect, d.A_symmetry_defect});

    const auto& sp = *desk().spectrum;
    const Schedule& sch = desk().problem->sched;
    const auto idx = resonance_index_set(sp, desk().J, desk_K());
    long checked = 0, psi_bad = 0;
    for (const auto& b : idx)
        for (int t = 0; t <= sch.S_max(); ++t) {
            ++checked;
            psi_bad += psi(t, b, sch, sp, desk().J, sp.delta0()) != psi(t, b.adjoint(), sch, sp, desk().J, sp.delta0());
        }
    const bool ok = worst <= 1e-12 && psi_bad == 0;
    return {ok, fmt("max symmetry defect %.1e over %d stage records; psi symmetric on %ld/%ld index-stage pairs", worst,
                    stages, checked - psi_bad, checked)};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
        else {
            std::fprintf(stderr, "usage: %s [--only N]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<std::function<Outcome()>> criteria = {c1, c2, c3, c4, c5, c6, c7, c8, c9};
    const double limits[] = {1, 10, 30, 300, 300, 120, 300, 1, 10};
    int failed = 0;
    for (int i = 1; i <= 9; ++i) {
        if (only && i != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(i - 1)]();
        } catch (const std::exception& ex) {
            o = {false, std::string("exception: ") + ex.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("criterion %d: %s  %s  [%.2fs, budget %.0fs]\n", i, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                    limits[i - 1]);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed ? 1 : 0;
}
