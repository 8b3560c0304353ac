// Convergence of trajectory ensembles to the master equation: the deviation
// of the ensemble-mean photon number shrinks like 1/sqrt(N).

#include <cstdio>

#include "mcwf/ensemble.hpp"
#include "mcwf/master.hpp"
#include "mcwf/models.hpp"

int main() {
    using namespace mcwf;

    ModeParams p;
    p.cutoff = 80;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);
    const StateVector psi0 = fock_state(10, p.cutoff);

    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 2.0;

    const auto master = evolve_master(psi0 * psi0.adjoint(), sys, ctl.Dt, ctl.T, StepControl{});
    TimeSeries ref;
    ref.t = master.t;
    for (const auto& r : master.rows) ref.v.push_back(r[2]);

    std::printf("# n_traj   deviation(<n>)\n");
    for (int n : {10, 100, 1000}) {
        EnsembleOptions opt;
        opt.n_traj = n;
        opt.base_seed = 7;
        const auto res = run_ensemble(EngineKind::stepwise, psi0, sys, ctl, StepControl{}, opt);
        std::printf("%8d  %.5f\n", n, deviation(res.primary_series(), ref));
    }
    return 0;
}
