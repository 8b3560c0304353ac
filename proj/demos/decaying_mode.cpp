// A single quantum trajectory of a decaying mode next to the exact
// master-equation mean, printed side by side.

#include <cstdio>

#include "mcwf/master.hpp"
#include "mcwf/models.hpp"
#include "mcwf/stepwise.hpp"

int main() {
    using namespace mcwf;

    ModeParams p;
    p.cutoff = 64;
    p.kappa = 1.0;
    p.nTh = 5.0;
    const auto sys = make_mode_system(p, Picture::nonunitary_interaction);

    DpControls ctl;
    ctl.dp_limit = 0.1;
    ctl.dp_overshoot = 1e6;
    ctl.Dt = 0.05;
    ctl.T = 5.0;

    const StateVector psi0 = fock_state(10, p.cutoff);
    const auto traj = run_trajectory(psi0, sys, ctl, StepControl{}, /*seed=*/42);

    const DensityMatrix rho0 = psi0 * psi0.adjoint();
    const auto master = evolve_master(rho0, sys, ctl.Dt, ctl.T, StepControl{});

    std::printf("# t     n(single traj)   n(master)\n");
    for (std::size_t i = 0; i < traj.samples.t.size(); i += 10)
        std::printf("%6.2f  %12.6f  %12.6f\n", traj.samples.t[i], traj.samples.rows[i][2],
                    master.rows[i][2]);
    std::printf("# steps=%lld  emissions=%lld  absorptions=%lld\n", traj.stats.steps,
                traj.stats.jumps[0], traj.stats.jumps[1]);
    return 0;
}
