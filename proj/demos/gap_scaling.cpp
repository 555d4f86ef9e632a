// Pseudospectral gap of L_k and linear decay rate for a few nu, next to sqrt(nu |k|).
#include <cstdio>

#include "channel_stab/linear_evolution.hpp"

using namespace channel_stab;

int main() {
    const GridPtr grid = make_grid(128);
    std::printf("%8s %3s %10s %8s %10s %10s\n", "nu", "k", "gap", "lambda", "decay", "sqrt(nu k)");
    for (double nu : {1e-2, 1e-3, 1e-4}) {
        for (int k : {1, 4}) {
            const auto op = assemble(grid, nu, k);
            const auto gap = pseudospectral_gap(op);
            ComplexProfile w0(grid->n);
            for (int i = 0; i < grid->n; ++i) {
                const double y = grid->nodes(i);
                w0(i) = (1 - y * y) * (1 + 0.5 * y);
            }
            const double dt = std::min(0.05, max_linear_dt(nu, k));
            const auto run = evolve(op, w0, {}, default_horizon(nu, k), dt, 0.0);
            std::printf("%8.0e %3d %10.4g %8.3f %10.4g %10.4g\n", nu, k, gap.gap, gap.lambda, measure_decay_rate(run.traj).rate,
                        std::sqrt(nu * k));
        }
    }
}
