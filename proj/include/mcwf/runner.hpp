#pragma once

#include <filesystem>
#include <string_view>

#include "mcwf/ensemble.hpp"
#include "mcwf/io.hpp"
#include "mcwf/markov.hpp"
#include "mcwf/master.hpp"
#include "mcwf/models.hpp"

namespace mcwf {

inline constexpr std::string_view kVersion = "0.1.0";

inline Picture picture_from_string(const std::string& s) {
    if (s == "schroedinger") return Picture::schroedinger;
    if (s == "interaction") return Picture::interaction;
    if (s == "nui") return Picture::nonunitary_interaction;
    throw ValidationError("key 'picture': unknown value '" + s + "'");
}

inline QuantumSystem make_system(const RunConfig& cfg) {
    if (cfg.model == "mode") {
        ModeParams p;
        p.cutoff = static_cast<int>(cfg.cutoff);
        p.kappa = cfg.kappa;
        p.nTh = cfg.nTh;
        p.eta = Complex(cfg.eta, cfg.etaIm);
        p.delta = cfg.delta;
        return make_mode_system(p, picture_from_string(cfg.picture));
    }
    ParticleParams p;
    p.k_cutoff = static_cast<int>(cfg.kCutoff);
    p.omega_rec = cfg.omegaRec;
    p.V = cfg.V;
    p.K_ratio = static_cast<int>(cfg.KRatio);
    return make_particle_system(p, picture_from_string(cfg.picture));
}

inline StateVector make_initial_state(const RunConfig& cfg) {
    if (cfg.model == "mode") {
        if (cfg.init == "coherent")
            return coherent_state(Complex(cfg.initAlphaRe, cfg.initAlphaIm),
                                  static_cast<int>(cfg.cutoff))
                .psi;
        return fock_state(static_cast<int>(cfg.initFock), static_cast<int>(cfg.cutoff));
    }
    ParticleParams p;
    p.k_cutoff = static_cast<int>(cfg.kCutoff);
    p.omega_rec = cfg.omegaRec;
    p.V = cfg.V;
    p.K_ratio = static_cast<int>(cfg.KRatio);
    return particle_gaussian_state(p, cfg.initK, cfg.initKWidth);
}

namespace detail {

inline void write_series_from_table(const std::string& path, const SampleTable& table,
                                    const std::vector<double>* sem = nullptr) {
    std::vector<std::string> header = {"t", std::string(table.names[0]), std::string(table.names[1]),
                                       std::string(table.names[2]), std::string(table.names[3])};
    if (sem) header.push_back("sem_" + std::string(table.names[2]));
    std::vector<std::vector<double>> rows;
    rows.reserve(table.t.size());
    for (std::size_t i = 0; i < table.t.size(); ++i) {
        std::vector<double> row = {table.t[i], table.rows[i][0], table.rows[i][1],
                                   table.rows[i][2], table.rows[i][3]};
        if (sem) row.push_back((*sem)[i]);
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

} // namespace detail

// Executes one batch run and writes series.csv, stats.csv and manifest into
// cfg.out. Outputs are a pure function of the manifest.
inline void run(const RunConfig& cfg) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);
    const auto path = [&](const char* name) { return (fs::path(cfg.out) / name).string(); };

    StepControl ode_ctl;
    ode_ctl.eps_abs = cfg.epsAbs;
    ode_ctl.eps_rel = cfg.epsRel;
    ode_ctl.dt_min = cfg.dtMin;

    std::vector<KeyValue> stats;
    const auto stat = [&](const std::string& k, const std::string& v) { stats.push_back({k, v}); };
    const auto statd = [&](const std::string& k, double v) { stat(k, fmt17(v)); };
    stat("method", cfg.method);

    if (cfg.method == "master") {
        // the reference solver integrates in the lab frame, where the
        // generator is algebraically traceless; observables do not depend on
        // the picture, which only concerns the trajectory engines
        RunConfig lab = cfg;
        lab.picture = "schroedinger";
        const QuantumSystem sys = make_system(lab);
        const StateVector psi0 = make_initial_state(cfg);
        DensityMatrix rho0 = psi0 * psi0.adjoint();
        const SampleTable table = evolve_master(rho0, sys, cfg.Dt, cfg.T, ode_ctl);
        detail::write_series_from_table(path("series.csv"), table);
        stat("grid_points", std::to_string(table.t.size()));
    } else if (cfg.method == "stepwise" || cfg.method == "integrating") {
        const QuantumSystem sys = make_system(cfg);
        const StateVector psi0 = make_initial_state(cfg);

        if (cfg.sampling == "equal-steps") {
            // one trajectory, one row per step
            TrajectoryOptions topt;
            topt.record_steps = true;
            topt.renormalize = cfg.renorm != 0;
            TrajectoryRecord rec;
            if (cfg.method == "stepwise") {
                DpControls ctl{cfg.dpLimit, cfg.dpOvershoot, cfg.Dt, cfg.T};
                rec = run_trajectory(psi0, sys, ctl, ode_ctl, cfg.seed, 0, topt);
            } else {
                IntegratingControls ctl{cfg.normTol, static_cast<int>(cfg.maxIters), cfg.Dt, cfg.T};
                rec = run_trajectory_integrating(psi0, sys, ctl, ode_ctl, cfg.seed, 0, topt);
            }
            if (rec.aborted) throw NumericError("trajectory aborted: " + rec.abort_reason);
            std::vector<std::string> header = {"t",
                                               std::string(sys.obs.names[0]),
                                               std::string(sys.obs.names[1]),
                                               std::string(sys.obs.names[2]),
                                               std::string(sys.obs.names[3]),
                                               "dt_did",
                                               "jump"};
            std::vector<std::vector<double>> rows;
            for (const auto& sr : rec.step_log) {
                if (sr.rejected_layer2) continue;
                rows.push_back({sr.t_before + sr.dt_did, sr.obs_after[0], sr.obs_after[1],
                                sr.obs_after[2], sr.obs_after[3], sr.dt_did,
                                double(sr.jump_index)});
            }
            write_csv(path("series.csv"), header, rows);
            const TrajStats& s = rec.stats;
            stat("steps", std::to_string(s.steps));
            statd("mean_dt", s.steps ? s.sum_dt / double(s.steps) : 0.0);
            statd("eq_steps_weighted_mean", s.sum_dt > 0 ? s.sum_v_dt / s.sum_dt : 0.0);
            statd("eq_steps_unweighted_mean", s.steps ? s.sum_v / double(s.steps) : 0.0);
            for (std::size_t c = 0; c < s.jumps.size(); ++c)
                stat("jumps_" + std::to_string(c), std::to_string(s.jumps[c]));
        } else {
            EnsembleOptions opt;
            opt.n_traj = static_cast<int>(cfg.nTraj);
            opt.base_seed = cfg.seed;
            opt.jobs = static_cast<int>(cfg.jobs);
            opt.traj.renormalize = cfg.renorm != 0;
            std::variant<DpControls, IntegratingControls> controls;
            EngineKind kind;
            if (cfg.method == "stepwise") {
                controls = DpControls{cfg.dpLimit, cfg.dpOvershoot, cfg.Dt, cfg.T};
                kind = EngineKind::stepwise;
            } else {
                controls =
                    IntegratingControls{cfg.normTol, static_cast<int>(cfg.maxIters), cfg.Dt, cfg.T};
                kind = EngineKind::integrating;
            }
            const EnsembleResult res = run_ensemble(kind, psi0, sys, controls, ode_ctl, opt);
            detail::write_series_from_table(path("series.csv"), res.mean, &res.sem_primary);

            const EnsembleStatistics& st = res.stats;
            stat("n_traj", std::to_string(st.n_traj));
            stat("contributing", std::to_string(st.contributing));
            stat("aborted", std::to_string(st.aborted));
            stat("total_steps", std::to_string(st.total_steps));
            statd("mean_dt_pooled", st.mean_dt_pooled);
            statd("mean_dt_traj", st.mean_dt_traj);
            statd("mean_dt_traj_sem", st.mean_dt_traj_sem);
            statd("full_dt_fraction", st.full_dt_fraction);
            stat("layer2_rejections", std::to_string(st.layer2_rejections));
            stat("retrieval_failures", std::to_string(st.retrieval_failures));
            for (std::size_t c = 0; c < st.jumps_mean.size(); ++c)
                statd("jumps_mean_" + std::to_string(c), st.jumps_mean[c]);
            statd("net_jumps_mean", st.net_jumps_mean);
            statd("net_jumps_sem", st.net_jumps_sem);
            statd("corr_dt_n", st.corr_dt_primary);
            statd("mean_inv_rtot", st.mean_inv_rtot);
            if (cfg.method == "stepwise")
                statd("predicted_mean_dt", predicted_mean_dt(cfg.dpLimit, st.mean_inv_rtot));
            statd("eq_steps_weighted_mean", st.eq_steps_weighted_mean);
            statd("eq_steps_unweighted_mean", st.eq_steps_unweighted_mean);
        }
    } else if (cfg.method == "oracle-gillespie" || cfg.method == "oracle-discrete") {
        if (cfg.model != "mode")
            throw ValidationError("key 'model': oracle methods require the mode model");
        ChainSpec spec{cfg.kappa, cfg.nTh};
        const int n0 = static_cast<int>(cfg.initFock);
        const auto u_max = static_cast<std::size_t>(std::llround(cfg.T / cfg.Dt));
        std::vector<double> sum_n(u_max + 1, 0.0), sum_n2(u_max + 1, 0.0);
        double sum_dt = 0;
        long long steps = 0, full_steps = 0, jumps_down = 0, jumps_up = 0;
        for (long long i = 0; i < cfg.nTraj; ++i) {
            if (cfg.method == "oracle-gillespie") {
                const auto events = gillespie_trajectory(n0, spec, cfg.T, cfg.seed,
                                                         static_cast<std::uint64_t>(i));
                for (std::size_t u = 0; u <= u_max; ++u) {
                    const int n = chain_state_at(events, n0, double(u) * cfg.Dt);
                    sum_n[u] += n;
                    sum_n2[u] += double(n) * double(n);
                }
                steps += static_cast<long long>(events.size());
            } else {
                const ChainWalkRecord rec =
                    run_chain_dp_controlled(n0, spec, cfg.dpLimit, cfg.Dt, cfg.T, cfg.seed,
                                            static_cast<std::uint64_t>(i));
                for (std::size_t u = 0; u <= u_max; ++u) {
                    sum_n[u] += rec.n[u];
                    sum_n2[u] += double(rec.n[u]) * double(rec.n[u]);
                }
                steps += rec.steps;
                full_steps += rec.full_dt_steps;
                jumps_down += rec.jumps_down;
                jumps_up += rec.jumps_up;
                sum_dt += rec.sum_dt;
            }
        }
        std::vector<std::string> header = {"t", "re_a", "im_a", "n", "var_n"};
        std::vector<std::vector<double>> rows;
        for (std::size_t u = 0; u <= u_max; ++u) {
            const double m = sum_n[u] / double(cfg.nTraj);
            rows.push_back({double(u) * cfg.Dt, 0.0, 0.0, m, sum_n2[u] / double(cfg.nTraj) - m * m});
        }
        write_csv(path("series.csv"), header, rows);
        stat("n_traj", std::to_string(cfg.nTraj));
        stat("total_steps", std::to_string(steps));
        if (cfg.method == "oracle-discrete") {
            statd("mean_dt_pooled", steps > 0 ? sum_dt / double(steps) : 0.0);
            statd("full_dt_fraction", steps > 0 ? double(full_steps) / double(steps) : 0.0);
            stat("jumps_down", std::to_string(jumps_down));
            stat("jumps_up", std::to_string(jumps_up));
        }
    }

    write_kv_file(path("stats.csv"), stats);
    write_kv_file(path("manifest"), cfg.manifest(std::string(kVersion)));
}

} // namespace mcwf
