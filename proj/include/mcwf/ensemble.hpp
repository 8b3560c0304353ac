#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <variant>
#include <vector>

#include "mcwf/integrating.hpp"
#include "mcwf/stepwise.hpp"

namespace mcwf {

struct TimeSeries {
    std::vector<double> t;
    std::vector<double> v;
};

// deviation(f,g) = 2 ||f-g|| / || |f|+|g| || with ||f|| the L1 norm in time,
// integrals taken by trapezoid on the shared grid.
inline double deviation(const TimeSeries& f, const TimeSeries& g) {
    const std::size_t n = f.t.size();
    if (n != g.t.size() || n != f.v.size() || n != g.v.size() || n < 2)
        throw DimensionError("deviation: series shapes differ or too short");
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(f.t[i] - g.t[i]) > 1e-9 * std::max(1.0, std::abs(f.t[i])))
            throw ContractError("deviation: sampling grids differ");
    double num = 0, den = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double w = 0.5 * (f.t[i + 1] - f.t[i]);
        num += w * (std::abs(f.v[i] - g.v[i]) + std::abs(f.v[i + 1] - g.v[i + 1]));
        den += w * (std::abs(f.v[i]) + std::abs(g.v[i]) + std::abs(f.v[i + 1]) + std::abs(g.v[i + 1]));
    }
    if (den == 0) throw NumericError("deviation: metric undefined for identically zero series");
    return 2.0 * num / den;
}

// Largest jump probability at which a full sampling interval is still
// traversable in one step from Fock state n.
inline double critical_dp(int n, double kappa, double nTh, double Dt) {
    if (n < 0) throw ValidationError("critical_dp: n must be >= 0");
    return 2.0 * kappa * Dt * ((2.0 * nTh + 1.0) * double(n) + nTh);
}

// Pure jump-probability-control prediction of the mean stepsize.
inline double predicted_mean_dt(double dp, double mean_inv_rtot) { return dp * mean_inv_rtot; }

enum class SamplingMethod { equal_time, equal_steps };

// Steady-state averaging rule: samples taken in equal time intervals are
// averaged plainly; samples taken every step must be weighted by the stepsize,
// otherwise states visited with small steps are overcounted.
inline double time_average(std::span<const double> values, std::span<const double> dts,
                           SamplingMethod method) {
    if (values.empty()) throw ValidationError("time_average: no samples");
    if (method == SamplingMethod::equal_time) {
        double s = 0;
        for (double v : values) s += v;
        return s / double(values.size());
    }
    if (dts.size() != values.size())
        throw ContractError("time_average: equal-steps averaging needs a stepsize per sample");
    double sv = 0, st = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sv += dts[i] * values[i];
        st += dts[i];
    }
    if (!(st > 0)) throw NumericError("time_average: zero total time");
    return sv / st;
}

inline double time_average(const std::vector<std::pair<double, std::optional<double>>>& samples,
                           SamplingMethod method) {
    std::vector<double> v, dt;
    v.reserve(samples.size());
    for (const auto& [val, d] : samples) {
        v.push_back(val);
        if (method == SamplingMethod::equal_steps) {
            if (!d) throw ContractError("time_average: sample missing its stepsize");
            dt.push_back(*d);
        }
    }
    return time_average(v, dt, method);
}

namespace detail {

// Binary-counter pairwise summation: the merge tree depends only on the item
// index, so pooled sums are independent of thread scheduling and permuting
// the inputs moves the result only at rounding level.
class PairwiseAccumulator {
public:
    void add(std::vector<double> v) {
        std::size_t level = 0;
        for (; level < slots_.size() && slots_[level].has_value(); ++level) {
            const auto& s = *slots_[level];
            for (std::size_t i = 0; i < v.size(); ++i) v[i] += s[i];
            slots_[level].reset();
        }
        if (level == slots_.size()) slots_.emplace_back();
        slots_[level] = std::move(v);
        ++count_;
    }

    std::size_t count() const { return count_; }

    std::vector<double> total(std::size_t size_hint = 0) const {
        std::vector<double> out(size_hint, 0.0);
        for (const auto& s : slots_) {
            if (!s) continue;
            if (out.size() < s->size()) out.resize(s->size(), 0.0);
            for (std::size_t i = 0; i < s->size(); ++i) out[i] += (*s)[i];
        }
        return out;
    }

private:
    std::vector<std::optional<std::vector<double>>> slots_;
    std::size_t count_ = 0;
};

} // namespace detail

enum class EngineKind { stepwise, integrating };

struct EnsembleOptions {
    int n_traj = 1;
    std::uint64_t base_seed = 0;
    int jobs = 0; // 0 = hardware concurrency
    bool keep_mean_series = true;
    bool keep_primary_per_traj = false;
    bool collect_final_labels = false;
    TrajectoryOptions traj{};
    double max_abort_fraction = 0.001;
};

struct EnsembleStatistics {
    int n_traj = 0;
    int contributing = 0;
    long long total_steps = 0;
    long long full_dt_steps = 0;
    long long layer2_rejections = 0;
    long long retrieval_failures = 0;
    std::vector<double> jumps_mean; // per channel, per trajectory
    double net_jumps_mean = 0;      // channel 0 minus channel 1
    double net_jumps_sem = 0;
    double mean_dt_traj = 0; // mean over trajectories of (T / steps)
    double mean_dt_traj_sem = 0;
    double mean_dt_pooled = 0; // total time / total steps
    double full_dt_fraction = 0;
    double corr_dt_primary = 0; // pooled Pearson over per-step pairs
    double mean_inv_rtot = 0;   // pooled per-step average of 1/r_tot across the ensemble
    double eq_steps_weighted_mean = 0;
    double eq_steps_unweighted_mean = 0;
    long long aborted = 0;
    std::vector<int> aborted_indices; // first few
};

struct EnsembleResult {
    SampleTable mean;
    std::vector<double> sem_primary;
    EnsembleStatistics stats;
    std::vector<int> final_labels;                 // when requested
    std::vector<std::vector<double>> primary_traj; // when requested

    TimeSeries primary_series() const {
        TimeSeries s;
        s.t = mean.t;
        s.v.reserve(mean.rows.size());
        for (const auto& r : mean.rows) s.v.push_back(r[2]);
        return s;
    }
};

namespace detail {

struct TrajPayload {
    std::vector<double> reduce;
    std::vector<double> primary;
    int final_label = 0;
    bool aborted = false;
    std::string reason;
};

struct ScalarLayout {
    // offsets into the scalar block of the reduce vector
    int channels;
    std::size_t base;
    static constexpr int fixed = 19;
    std::size_t size() const { return fixed + channels; }
};

} // namespace detail

// Runs trajectory index i with the stream (base_seed, i) and reduces the
// ensemble deterministically: the result does not depend on the number of
// worker threads or their scheduling.
inline EnsembleResult run_ensemble(EngineKind kind, const StateVector& psi0,
                                   const QuantumSystem& sys,
                                   const std::variant<DpControls, IntegratingControls>& controls,
                                   const StepControl& ode_ctl, const EnsembleOptions& opt) {
    if (opt.n_traj < 1) throw ValidationError("run_ensemble: n_traj must be >= 1");
    const int channels = std::max(1, sys.channels());
    double T = 0, Dt = 0;
    if (kind == EngineKind::stepwise) {
        const auto& c = std::get<DpControls>(controls);
        c.validate();
        T = c.T;
        Dt = c.Dt;
    } else {
        const auto& c = std::get<IntegratingControls>(controls);
        c.validate();
        T = c.T;
        Dt = c.Dt;
    }
    const auto grid_points = static_cast<std::size_t>(std::llround(T / Dt)) + 1;
    const detail::ScalarLayout layout{channels, grid_points * 5};

    const auto compute = [&](int idx) -> detail::TrajPayload {
        TrajectoryRecord rec =
            (kind == EngineKind::stepwise)
                ? run_trajectory(psi0, sys, std::get<DpControls>(controls), ode_ctl, opt.base_seed,
                                 static_cast<std::uint64_t>(idx), opt.traj)
                : run_trajectory_integrating(psi0, sys, std::get<IntegratingControls>(controls),
                                             ode_ctl, opt.base_seed,
                                             static_cast<std::uint64_t>(idx), opt.traj);
        detail::TrajPayload p;
        p.final_label = rec.final_label;
        p.aborted = rec.aborted;
        p.reason = rec.abort_reason;
        if (rec.aborted) return p;

        p.reduce.assign(layout.base + layout.size(), 0.0);
        if (rec.samples.t.size() != grid_points)
            throw NumericError("run_ensemble: trajectory returned a mismatched grid");
        for (std::size_t g = 0; g < grid_points; ++g) {
            for (int c = 0; c < 4; ++c) p.reduce[5 * g + c] = rec.samples.rows[g][c];
            const double prim = rec.samples.rows[g][2];
            p.reduce[5 * g + 4] = prim * prim;
        }
        const TrajStats& s = rec.stats;
        double* sc = p.reduce.data() + layout.base;
        const double traj_mean_dt = s.steps > 0 ? s.sum_dt / double(s.steps) : 0.0;
        double net = 0;
        if (s.jumps.size() >= 2)
            net = double(s.jumps[0]) - double(s.jumps[1]);
        else if (!s.jumps.empty())
            net = double(s.jumps[0]);
        sc[0] = double(s.steps);
        sc[1] = double(s.full_dt_steps);
        sc[2] = double(s.layer2_rejections);
        sc[3] = double(s.retrieval_failures);
        sc[4] = s.sum_dt;
        sc[5] = traj_mean_dt;
        sc[6] = traj_mean_dt * traj_mean_dt;
        sc[7] = s.sum_inv_rtot;
        sc[8] = net;
        sc[9] = net * net;
        sc[10] = s.corr_n;
        sc[11] = s.corr_sx;
        sc[12] = s.corr_sy;
        sc[13] = s.corr_sxx;
        sc[14] = s.corr_syy;
        sc[15] = s.corr_sxy;
        sc[16] = s.sum_v;
        sc[17] = s.sum_v_dt;
        sc[18] = double(s.steps_rtot_zero);
        for (int c = 0; c < channels && c < int(s.jumps.size()); ++c)
            sc[detail::ScalarLayout::fixed + c] = double(s.jumps[c]);

        if (opt.keep_primary_per_traj) {
            p.primary.resize(grid_points);
            for (std::size_t g = 0; g < grid_points; ++g) p.primary[g] = rec.samples.rows[g][2];
        }
        return p;
    };

    detail::PairwiseAccumulator acc;
    EnsembleResult result;
    if (opt.collect_final_labels) result.final_labels.assign(opt.n_traj, -1);
    if (opt.keep_primary_per_traj) result.primary_traj.resize(opt.n_traj);
    std::vector<int> aborted_indices;
    std::string first_abort_reason;

    const auto consume = [&](int idx, detail::TrajPayload&& p) {
        if (p.aborted) {
            if (aborted_indices.empty()) first_abort_reason = p.reason;
            aborted_indices.push_back(idx);
            return;
        }
        acc.add(std::move(p.reduce));
        if (opt.collect_final_labels) result.final_labels[idx] = p.final_label;
        if (opt.keep_primary_per_traj) result.primary_traj[idx] = std::move(p.primary);
    };

    int jobs = opt.jobs > 0 ? opt.jobs : int(std::thread::hardware_concurrency());
    jobs = std::max(1, std::min(jobs, opt.n_traj));

    if (jobs == 1) {
        for (int i = 0; i < opt.n_traj; ++i) consume(i, compute(i));
    } else {
        std::mutex mu;
        std::condition_variable cv;
        std::map<int, detail::TrajPayload> ready;
        std::atomic<int> next{0};
        int reduced = 0;
        const int window = std::max(64, 8 * jobs);
        std::exception_ptr failure;

        std::vector<std::thread> pool;
        pool.reserve(jobs);
        for (int w = 0; w < jobs; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    const int i = next.fetch_add(1);
                    if (i >= opt.n_traj) return;
                    try {
                        detail::TrajPayload p = compute(i);
                        std::unique_lock lk(mu);
                        cv.wait(lk, [&] { return failure || i < reduced + window; });
                        if (failure) return;
                        ready.emplace(i, std::move(p));
                        cv.notify_all();
                    } catch (...) {
                        std::lock_guard lk(mu);
                        if (!failure) failure = std::current_exception();
                        cv.notify_all();
                        return;
                    }
                }
            });
        }
        {
            std::unique_lock lk(mu);
            while (reduced < opt.n_traj) {
                cv.wait(lk, [&] { return failure || ready.count(reduced) > 0; });
                if (failure) break;
                auto node = ready.extract(reduced);
                lk.unlock();
                consume(reduced, std::move(node.mapped()));
                lk.lock();
                ++reduced;
                cv.notify_all();
            }
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    const int contributing = int(acc.count());
    const long long aborted = opt.n_traj - contributing;
    if (double(aborted) > opt.max_abort_fraction * double(opt.n_traj) && aborted > 0) {
        std::string msg = "run_ensemble: " + std::to_string(aborted) + " of " +
                          std::to_string(opt.n_traj) + " trajectories aborted [" +
                          first_abort_reason + "]; first indices:";
        for (std::size_t i = 0; i < aborted_indices.size() && i < 8; ++i)
            msg += " " + std::to_string(aborted_indices[i]);
        throw NumericError(msg);
    }
    if (contributing == 0) throw NumericError("run_ensemble: no trajectory finished");

    const std::vector<double> tot = acc.total(layout.base + layout.size());
    const double nn = double(contributing);

    if (opt.keep_mean_series) {
        result.mean.names = sys.obs.names;
        result.mean.t.resize(grid_points);
        result.mean.rows.resize(grid_points);
        result.sem_primary.resize(grid_points);
        for (std::size_t g = 0; g < grid_points; ++g) {
            result.mean.t[g] = double(g) * Dt;
            for (int c = 0; c < 4; ++c) result.mean.rows[g][c] = tot[5 * g + c] / nn;
            const double m = result.mean.rows[g][2];
            const double var = std::max(0.0, tot[5 * g + 4] / nn - m * m);
            result.sem_primary[g] = contributing > 1 ? std::sqrt(var / (nn - 1.0)) : 0.0;
        }
    }

    EnsembleStatistics& st = result.stats;
    const double* sc = tot.data() + layout.base;
    st.n_traj = opt.n_traj;
    st.contributing = contributing;
    st.total_steps = static_cast<long long>(sc[0]);
    st.full_dt_steps = static_cast<long long>(sc[1]);
    st.layer2_rejections = static_cast<long long>(sc[2]);
    st.retrieval_failures = static_cast<long long>(sc[3]);
    st.mean_dt_pooled = sc[0] > 0 ? sc[4] / sc[0] : 0.0;
    st.mean_dt_traj = sc[5] / nn;
    {
        const double var = std::max(0.0, sc[6] / nn - st.mean_dt_traj * st.mean_dt_traj);
        st.mean_dt_traj_sem = contributing > 1 ? std::sqrt(var / (nn - 1.0)) : 0.0;
    }
    {
        const double live = sc[0] - sc[18];
        st.mean_inv_rtot = live > 0 ? sc[7] / live : 0.0; // pooled over all steps
    }
    st.net_jumps_mean = sc[8] / nn;
    {
        const double var = std::max(0.0, sc[9] / nn - st.net_jumps_mean * st.net_jumps_mean);
        st.net_jumps_sem = contributing > 1 ? std::sqrt(var / (nn - 1.0)) : 0.0;
    }
    st.full_dt_fraction = sc[0] > 0 ? sc[1] / sc[0] : 0.0;
    {
        const double cn = sc[10];
        const double cov = cn * sc[15] - sc[11] * sc[12];
        const double vx = cn * sc[13] - sc[11] * sc[11];
        const double vy = cn * sc[14] - sc[12] * sc[12];
        st.corr_dt_primary = (vx > 0 && vy > 0) ? cov / std::sqrt(vx * vy) : 0.0;
    }
    st.eq_steps_unweighted_mean = sc[0] > 0 ? sc[16] / sc[0] : 0.0;
    st.eq_steps_weighted_mean = sc[4] > 0 ? sc[17] / sc[4] : 0.0;
    st.jumps_mean.resize(channels);
    for (int c = 0; c < channels; ++c)
        st.jumps_mean[c] = sc[detail::ScalarLayout::fixed + c] / nn;
    st.aborted = aborted;
    st.aborted_indices = aborted_indices;
    return result;
}

} // namespace mcwf
