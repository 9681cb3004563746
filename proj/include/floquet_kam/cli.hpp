#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "floquet_kam/block_ops.hpp"
#include "floquet_kam/kam_engine.hpp"
#include "floquet_kam/models.hpp"
#include "floquet_kam/resonance.hpp"
#include "floquet_kam/schedules.hpp"

namespace floquet_kam::cli {

enum ExitCode { kOk = 0, kConfigError = 2, kToleranceFailure = 3 };

using nlohmann::json;

struct RunConfig {
    json model = {{"model", "square_well"}, {"drive", "cos"}, {"M_max", 6}};
    std::optional<double> J;
    double r = 4.0;
    double sigma = 2.0;
    double alpha = 2.0;
    std::string schedule = "qr_e_alpha";  // q^r = e^α | sigma_adapted | custom
    std::optional<double> q;
    std::optional<double> eps_scale;  // multiplies the drive directly
    double eps_fraction = 0.5;        // otherwise: scale the drive so that ε_V = eps_fraction·ε★
    int S_max = 5;
    double K_work_factor = 4.0;
    int grid_points = 201;
    std::optional<double> omega;
    double series_tol = 1e-12;
    double identity_tol = 1e-6;
    double unitarity_tol = 1e-8;
    bool verify = true;
    int max_oracle_basis = 2000;
    int threads = 0;  // 0: hardware concurrency
    std::string out;
};

// dotted-path assignment; the value is parsed as JSON when possible
inline void apply_override(json& j, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;
    json* node = &j;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set: empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
        if (!(*node)[parts[i]].is_object())
            throw ConfigError("--set " + key + ": '" + parts[i] + "' is not an object (use e.g. model.model=rotor)");
        node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = value;
}

inline RunConfig config_from_json(const json& j) {
    static const std::vector<std::string> known = {
        "model", "J", "r", "sigma", "alpha", "schedule", "q", "eps_scale", "eps_fraction", "S_max", "M_max",
        "K_work_factor", "grid_points", "omega", "series_tol", "identity_tol", "unitarity_tol", "verify",
        "max_oracle_basis", "threads", "out"};
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [k, _] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown config key '" + k + "'");
    try {
        RunConfig c;
        if (j.contains("model")) {
            c.model = j.at("model");
            if (c.model.is_string()) c.model = json{{"model", c.model.get<std::string>()}};
        }
        if (j.contains("M_max")) c.model["M_max"] = j.at("M_max");
        if (j.contains("J")) c.J = j.at("J").get<double>();
        c.r = j.value("r", c.r);
        c.sigma = j.value("sigma", c.sigma);
        c.alpha = j.value("alpha", c.alpha);
        c.schedule = j.value("schedule", c.schedule);
        if (j.contains("q")) c.q = j.at("q").get<double>();
        if (j.contains("eps_scale")) c.eps_scale = j.at("eps_scale").get<double>();
        c.eps_fraction = j.value("eps_fraction", c.eps_fraction);
        c.S_max = j.value("S_max", c.S_max);
        c.K_work_factor = j.value("K_work_factor", c.K_work_factor);
        c.grid_points = j.value("grid_points", c.grid_points);
        if (j.contains("omega")) c.omega = j.at("omega").get<double>();
        c.series_tol = j.value("series_tol", c.series_tol);
        c.identity_tol = j.value("identity_tol", c.identity_tol);
        c.unitarity_tol = j.value("unitarity_tol", c.unitarity_tol);
        c.verify = j.value("verify", c.verify);
        c.max_oracle_basis = j.value("max_oracle_basis", c.max_oracle_basis);
        c.threads = j.value("threads", c.threads);
        c.out = j.value("out", c.out);
        if (!(c.series_tol > 0) || !(c.identity_tol > 0) || !(c.unitarity_tol > 0))
            throw ConfigError("tolerances must be positive");
        if (!(c.K_work_factor > 0)) throw ConfigError("K_work_factor must be positive");
        if (c.S_max < 0) throw ConfigError("S_max must be >= 0");
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    }
    for (const auto& o : overrides) apply_override(j, o);
    return config_from_json(j);
}

inline std::string model_kind(const RunConfig& c) { return c.model.value("model", std::string("square_well")); }

inline SpectrumPtr config_spectrum(const RunConfig& c) {
    const std::string kind = model_kind(c);
    if (kind == "square_well") return square_well_spectrum(square_well_from_json(c.model).M_max);
    if (kind == "rotor") {
        const auto m = rotor_from_json(c.model);
        return rotor_spectrum(m.N, m.M_max);
    }
    throw ConfigError("unknown model '" + kind + "'");
}

inline double config_J(const RunConfig& c, const Spectrum& sp) {
    if (c.J) {
        if (!(*c.J > 0)) throw ConfigError("J must be positive");
        return *c.J;
    }
    if (model_kind(c) == "square_well") return 3 * std::numbers::pi * std::numbers::pi;
    return sp.delta0();
}

inline double config_q(const RunConfig& c) {
    if (c.schedule == "qr_e_alpha") return std::exp(c.alpha / c.r);
    if (c.schedule == "sigma_adapted") {
        if (c.r > 0.875 * (2 * c.sigma + 1)) throw ConfigError("sigma_adapted schedule needs r <= (7/8)(2 sigma + 1)");
        return std::exp(4.0 / (2 * c.sigma + 1));
    }
    if (c.schedule == "custom") {
        if (!c.q) throw ConfigError("custom schedule needs q");
        return *c.q;
    }
    throw ConfigError("unknown schedule '" + c.schedule + "'");
}

struct Setup {
    SpectrumPtr spectrum;
    double J = 0, q = 0;
    EpsStar eps;
    std::optional<KamProblem> problem;  // square well only
    std::optional<SquareWellModel> well;
};

inline Setup build_setup(const RunConfig& c) {
    Setup s;
    s.spectrum = config_spectrum(c);
    s.J = config_J(c, *s.spectrum);
    s.q = config_q(c);
    s.eps = eps_star(c.r, s.spectrum->delta0(), s.J, c.alpha, s.q);
    if (model_kind(c) == "square_well") {
        SquareWellModel w = square_well_from_json(c.model);
        const double base = epsilon_V(square_well_blocks(w), c.r);
        double scale = 1.0;
        if (c.eps_scale) scale = *c.eps_scale;
        else if (base > 0) scale = c.eps_fraction * s.eps.value / base;
        for (auto& [k, z] : w.z) z *= scale;
        BlockOperator V = square_well_blocks(w);
        V.prune(0.0);
        const double epsV = epsilon_V(V, c.r);
        s.problem.emplace(KamProblem{V, s.J, make_schedule(c.alpha, s.q, c.r, epsV, c.S_max)});
        s.well = w;
    } else {
        make_schedule(c.alpha, s.q, c.r, 0.0, c.S_max);  // validates the schedule inequalities
    }
    return s;
}

inline const KamProblem& require_problem(const Setup& s) {
    if (!s.problem) throw ConfigError("this command needs explicit matrix blocks; the rotor model provides norm envelopes only");
    return *s.problem;
}

inline int k_work(const RunConfig& c, const Schedule& sch) {
    return static_cast<int>(std::ceil(c.K_work_factor * sch.E(sch.S_max())));
}

template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t nt = std::min<std::size_t>(n, threads > 0 ? static_cast<std::size_t>(threads) : hw);
    if (nt <= 1) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t)
        pool.emplace_back([&] {
            for (std::size_t i; (i = next++) < n;) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lk(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

inline std::string fmt(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    out << text;
}

// ---- constants -------------------------------------------------------------

inline json constants_report(const RunConfig& c) {
    const Setup s = build_setup(c);
    const Spectrum& sp = *s.spectrum;
    const double qr = std::pow(s.q, c.r);
    const DeltaSigma ds = delta_sigma(sp, c.sigma, s.J);
    const double d1 = delta_one(c.sigma, c.r, c.alpha, s.q);
    const double dstar = d1 * ds.value;
    const double omega0 = 17 * s.J / 72;
    json j{{"J", s.J},
           {"Delta0", sp.delta0()},
           {"alpha", c.alpha},
           {"q", s.q},
           {"r", c.r},
           {"q_pow_r", qr},
           {"sigma", c.sigma},
           {"levels", sp.size()},
           {"eps_star", s.eps.value},
           {"eps_star_bound1", s.eps.bound1},
           {"eps_star_bound2", s.eps.bound2},
           {"delta_one", d1},
           {"Delta_sigma", ds.value},
           {"Delta_sigma_last_shell", ds.last_shell},
           {"Delta_sigma_local_exponent", ds.local_exponent},
           {"Delta_sigma_diverging", ds.diverging},
           {"delta_star", dstar},
           {"Omega0_measure", omega0},
           {"eps_budget", std::min(s.eps.value, omega0 / dstar)}};
    if (s.problem) {
        const Schedule& sch = s.problem->sched;
        const auto cc = contraction_constants(sch);
        j["eps_V"] = sch.eps_V();
        j["a"] = sch.a();
        j["A_star"] = cc.A_star;
        j["B_star"] = cc.B_star;
        j["C_star"] = cc.C_star;
        j["A"] = cc.A;
        j["B"] = cc.B;
        j["C"] = cc.C;
        j["smallness_B"] = cc.smallness_B;
        j["smallness_A"] = cc.smallness_A;
        j["contraction_lhs"] = cc.contraction_lhs;
        j["contraction_ok"] = cc.contraction;
        j["eps_V_within_eps_star"] = sch.eps_V() <= s.eps.value;
        j["eps_V_within_budget"] = sch.eps_V() < std::min(s.eps.value, omega0 / dstar);
    }
    return j;
}

inline int cmd_constants(const RunConfig& c, std::ostream& os) {
    const json j = constants_report(c);
    os << std::setprecision(17);
    os << "J              " << j["J"].get<double>() << "\n"
       << "Delta0         " << j["Delta0"].get<double>() << "\n"
       << "q^r            " << j["q_pow_r"].get<double>() << "\n"
       << "eps_star       " << j["eps_star"].get<double>() << "\n"
       << "Delta_sigma(J) " << j["Delta_sigma"].get<double>()
       << (j["Delta_sigma_diverging"].get<bool>() ? "  (partial sums still growing)" : "") << "\n"
       << "delta_star     " << j["delta_star"].get<double>() << "\n"
       << "|Omega0|       " << j["Omega0_measure"].get<double>() << "\n"
       << "eps budget     " << j["eps_budget"].get<double>() << "\n";
    if (j.contains("eps_V")) {
        os << "eps_V          " << j["eps_V"].get<double>() << "\n"
           << "A B C          " << j["A"].get<double>() << " " << j["B"].get<double>() << " " << j["C"].get<double>() << "\n"
           << "smallness      " << (j["smallness_B"].get<bool>() && j["smallness_A"].get<bool>() ? "pass" : "FAIL") << "\n"
           << "contraction    " << j["contraction_lhs"].get<double>() << " <= 3 "
           << (j["contraction_ok"].get<bool>() ? "pass" : "FAIL") << "\n";
    }
    if (!c.out.empty()) write_file(c.out, j.dump(2) + "\n");
    return kOk;
}

// ---- run -------------------------------------------------------------------

inline EngineConfig engine_config(const RunConfig& c, const Schedule& sch, bool verify) {
    EngineConfig e;
    e.series.tol = c.series_tol;
    if (verify) e.K_verify = k_work(c, sch);
    return e;
}

inline double config_omega(const RunConfig& c, double J) {
    const double w = c.omega.value_or(J);
    if (w < 8 * J / 9 || w > 9 * J / 8) throw ConfigError("omega must lie in [8J/9, 9J/8]");
    return w;
}

inline void print_summary(const RunReport& r, std::ostream& os) {
    os << std::setprecision(17);
    os << "omega " << r.omega << "  status " << to_string(r.status) << "  stages " << r.final_stage << "\n";
    if (r.witness)
        os << "witness " << to_string(*r.witness) << "  distance " << r.witness_distance << "  psi " << r.witness_psi << "\n";
    os << "s  w_s  v_s  a_norm  gamma_ok  identity_residual\n";
    for (const auto& d : r.stages) {
        os << d.s << "  " << d.w << "  " << d.v << "  " << d.a_norm << "  " << (d.gamma_bound_ok ? "yes" : "no") << "  ";
        if (d.identity_residual) os << *d.identity_residual; else os << "-";
        os << "\n";
    }
    if (!r.level_shifts.empty()) {
        os << "level  eig(h_m + W_0mm)\n";
        for (std::size_t m = 0; m < r.level_shifts.size(); ++m) {
            os << m;
            for (double e : r.level_shifts[m]) os << "  " << e;
            os << "\n";
        }
    }
}

inline bool tolerance_failure(const RunConfig& c, const RunReport& r) {
    for (const auto& d : r.stages)
        if (d.identity_residual && *d.identity_residual > c.identity_tol) return true;
    return r.unitarity && *r.unitarity > c.unitarity_tol;
}

inline int cmd_run(const RunConfig& c, std::ostream& os) {
    const Setup s = build_setup(c);
    const KamProblem& pb = require_problem(s);
    const double omega = config_omega(c, s.J);
    const RunReport r = run(omega, pb, engine_config(c, pb.sched, c.verify));
    print_summary(r, os);
    write_file(c.out.empty() ? "run_report.json" : c.out, to_json(r).dump(2) + "\n");
    return tolerance_failure(c, r) ? kToleranceFailure : kOk;
}

// ---- sweep -----------------------------------------------------------------

struct SweepResult {
    FrequencyGrid grid;
    std::vector<std::optional<IterationState>> states;
    std::vector<int> survivors;  // good points after each stage's test
    int contraction_violations = 0;
    int symmetry_violations = 0;
    double max_symmetry_defect = 0;
};

// Stage-major exclusion: every point keeps its own iteration state; stage s tests all
// surviving points, then advances the survivors.
inline SweepResult sweep(const KamProblem& pb, double J, int points, int threads = 0) {
    SweepResult out{FrequencyGrid(J, points), {}, {}, 0, 0, 0.0};
    const std::size_t n = out.grid.size();
    out.states.resize(n);
    parallel_for(n, threads, [&](std::size_t i) { out.states[i] = init_state(pb, out.grid.points()[i]); });
    const BlockOperator& V = pb.V;
    for (int s = 0; s < pb.sched.S_max(); ++s) {
        std::vector<NonresonanceResult> res(n);
        std::vector<char> active(n, 0);
        for (std::size_t i = 0; i < n; ++i) active[i] = out.grid.status(i).state != PointState::Resonant;
        parallel_for(n, threads, [&](std::size_t i) {
            if (!active[i]) return;
            auto& st = *out.states[i];
            res[i] = stage_resonance(st, pb);
            st.diagnostics.back().resonance = res[i];
            if (res[i].ok) iterate_step(st, constant_on(V, single_point_grid(st.omega)), pb, {}, false);
        });
        for (std::size_t i = 0; i < n; ++i)
            if (active[i]) out.grid.record(i, s, res[i]);
        out.survivors.push_back(static_cast<int>(out.grid.count(PointState::Good)));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (out.grid.status(i).state != PointState::Good) continue;
        for (const auto& d : out.states[i]->diagnostics) {
            if (!d.contraction_ok) ++out.contraction_violations;
            const double sym = std::max(d.W_symmetry_defect, d.A_symmetry_defect);
            out.max_symmetry_defect = std::max(out.max_symmetry_defect, sym);
            if (sym > 1e-12) ++out.symmetry_violations;
        }
    }
    return out;
}

inline json sweep_summary(const SweepResult& r, double delta_star, double eps_V) {
    const auto& g = r.grid;
    const double bound = g.total_measure() - delta_star * eps_V;
    const double slack = g.excluded_intervals() * g.cell_width();
    return {{"grid_points", g.size()},
            {"cell_width", g.cell_width()},
            {"good_count", g.count(PointState::Good)},
            {"good_measure_estimate", g.good_measure()},
            {"bad_measure_estimate", g.bad_measure()},
            {"excluded_intervals", g.excluded_intervals()},
            {"Omega0_measure", g.total_measure()},
            {"delta_star", delta_star},
            {"eps_V", eps_V},
            {"bound", bound},
            {"satisfied", g.good_measure() + slack >= bound},
            {"survivors_per_stage", r.survivors},
            {"contraction_violations", r.contraction_violations},
            {"max_symmetry_defect", r.max_symmetry_defect}};
}

inline int cmd_sweep(const RunConfig& c, std::ostream& os) {
    if (c.grid_points < 2) throw ConfigError("sweep needs grid_points >= 2");
    const Setup s = build_setup(c);
    const KamProblem& pb = require_problem(s);
    const SweepResult r = sweep(pb, s.J, c.grid_points, c.threads);
    const double dstar = delta_one(c.sigma, c.r, c.alpha, s.q) * delta_sigma(*s.spectrum, c.sigma, s.J).value;
    const json summary = sweep_summary(r, dstar, pb.sched.eps_V());
    const std::string csv_path = c.out.empty() ? "sweep.csv" : c.out;
    std::ostringstream csv;
    r.grid.write_csv(csv);
    write_file(csv_path, csv.str());
    write_file(csv_path + ".summary.json", summary.dump(2) + "\n");
    os << std::setprecision(17) << "good " << r.grid.count(PointState::Good) << " / " << r.grid.size()
       << "  measure " << r.grid.good_measure() << "  bound " << summary["bound"].get<double>() << "  "
       << (summary["satisfied"].get<bool>() ? "satisfied" : "not satisfied") << "\n";
    return kOk;
}

// ---- oracle ----------------------------------------------------------------

inline int cmd_oracle(const RunConfig& c, std::ostream& os) {
    const Setup s = build_setup(c);
    const KamProblem& pb = require_problem(s);
    const double omega = config_omega(c, s.J);
    const int K = k_work(c, pb.sched);
    const auto basis = dense_dim(pb.spectrum(), K);
    if (basis > c.max_oracle_basis) {
        const int kmax = (c.max_oracle_basis / pb.spectrum().total_dim() - 1) / 2;
        throw ConfigError("oracle basis " + std::to_string(basis) + " exceeds " + std::to_string(c.max_oracle_basis) +
                          "; lower K_work_factor or M_max so that K_work <= " + std::to_string(kmax));
    }
    EngineConfig e = engine_config(c, pb.sched, true);
    auto rr = run_detailed(omega, pb, e);
    if (rr.report.status == RunStatus::Resonant) {
        print_summary(rr.report, os);
        os << "no comparison: frequency excluded\n";
        write_file(c.out.empty() ? "oracle_report.json" : c.out, to_json(rr.report).dump(2) + "\n");
        return kOk;
    }
    rr.report.oracle = oracle_compare(rr.state, rr.tracker->U(), K, rr.tracker->K_window());
    const auto& oc = *rr.report.oracle;
    print_summary(rr.report, os);
    os << "basis " << basis << "  window |k| <= " << oc.K_window << "\n"
       << "max error " << oc.max_error << "  median " << oc.median_error << "  min overlap " << oc.min_overlap
       << "  unitarity " << oc.unitarity << "\n";
    write_file(c.out.empty() ? "oracle_report.json" : c.out, to_json(rr.report).dump(2) + "\n");
    return tolerance_failure(c, rr.report) ? kToleranceFailure : kOk;
}

// ---- model-dump ------------------------------------------------------------

inline int cmd_model_dump(const RunConfig& c, std::ostream& os) {
    const Setup s = build_setup(c);
    json j{{"model", model_kind(c)}, {"levels", s.spectrum->levels()}, {"mults", s.spectrum->mults()}, {"J", s.J}};
    const DeltaSigma ds = delta_sigma(*s.spectrum, c.sigma, s.J);
    j["Delta_sigma"] = {{"value", ds.value}, {"last_shell", ds.last_shell}, {"local_exponent", ds.local_exponent},
                        {"diverging", ds.diverging}};
    if (s.problem) {
        j["eps_V"] = s.problem->sched.eps_V();
        j["drive"] = drive_to_json(s.well->z);
        j["operator"] = to_json(s.problem->V);
    } else {
        const auto rm = rotor_from_json(c.model);
        json env = json::array();
        for (int n = 0; n < s.spectrum->size(); ++n)
            for (int m = 0; m < s.spectrum->size(); ++m)
                if (m != n) env.push_back({{"n", n}, {"m", m}, {"k1_envelope", rotor_envelope(*s.spectrum, 1, n, m, c.r + 1.1, rm.envelope_const)}});
        j["envelopes"] = env;
    }
    const std::string text = j.dump(2) + "\n";
    if (c.out.empty()) os << text; else write_file(c.out, text);
    return kOk;
}

}  // namespace floquet_kam::cli
