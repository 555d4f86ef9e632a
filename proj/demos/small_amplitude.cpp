// One nonlinear run below the stability threshold: energy history and outcome.
#include <cstdio>

#include "channel_stab/nonlinear_sim.hpp"

using namespace channel_stab;

int main(int argc, char** argv) {
    SimConfig c;
    c.nu = 1e-3;
    c.K = 16;
    c.n = 96;
    c.T = argc > 1 ? std::atof(argv[1]) : 60.0;
    c.amplitude = 0.01 * std::pow(c.nu, 2.0 / 3.0);
    c.family = InitFamily::random_sobolev;
    c.seed = 1;
    c.record_every = 200;
    const RunRecord r = simulate(c);
    std::printf("%10s %14s %14s\n", "t", "E/E(0)", "proxy");
    for (const auto& p : r.series) std::printf("%10.2f %14.6e %14.6e\n", p.t, p.energy / r.initial_energy, p.proxy);
    std::printf("outcome: %s\n", to_string(classify_outcome(r)).c_str());
}
