#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcwf/state.hpp"

namespace mcwf {

// Observable rows on the sampling grid u * Dt.
struct SampleTable {
    std::array<std::string, 4> names{};
    std::vector<double> t;
    std::vector<std::array<double, 4>> rows;

    void clear() {
        t.clear();
        rows.clear();
    }
};

// Per-step log entry, recorded on request only.
struct StepRecord {
    double t_before = 0;
    double dt_did = 0;
    double dp_step = 0;        // r_tot * dt_did
    double norm_correction = 1; // norm before the exact renormalization
    int jump_index = -1;       // -1: no jump
    bool rejected_layer2 = false;
    std::vector<double> rates;
    std::array<double, 4> obs_after{}; // observable row after the step
};

// Streaming statistics accumulated along one trajectory.
struct TrajStats {
    long long steps = 0;
    long long full_dt_steps = 0; // boundary-to-boundary steps of a full sampling interval
    long long layer2_rejections = 0;
    long long retrieval_failures = 0; // integrating method only
    std::vector<long long> jumps;     // per channel

    double sum_dt = 0;
    double sum_inv_rtot = 0; // sum of 1/r_tot over steps with r_tot > 0
    long long steps_rtot_zero = 0;

    // per-step pairs (dt_did, primary observable at step start)
    double corr_n = 0, corr_sx = 0, corr_sy = 0, corr_sxx = 0, corr_syy = 0, corr_sxy = 0;

    // equal-steps averages of the primary observable (value after the step)
    double sum_v = 0, sum_v_dt = 0;

    void add_step(double dt, double n_before, double n_after, double r_tot) {
        ++steps;
        sum_dt += dt;
        if (r_tot > 0)
            sum_inv_rtot += 1.0 / r_tot;
        else
            ++steps_rtot_zero;
        corr_n += 1;
        corr_sx += dt;
        corr_sy += n_before;
        corr_sxx += dt * dt;
        corr_syy += n_before * n_before;
        corr_sxy += dt * n_before;
        sum_v += n_after;
        sum_v_dt += dt * n_after;
    }
};

struct TrajectoryOptions {
    bool record_steps = false;
    bool renormalize = true; // per-step exact renormalization (stepwise engine)
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    SampleTable samples;
    TrajStats stats;
    std::vector<StepRecord> step_log; // filled only when requested
    int final_label = 0;              // basis label of the largest amplitude at the end
    double final_time = 0;
    bool aborted = false;
    std::string abort_reason;
};

} // namespace mcwf
