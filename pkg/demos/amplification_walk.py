"""One amplification chain, step by step.

State is (alpha_j, xi_j): ramp width and mean mass. Each level picks case
1 (heavy tail: halve the ramp) or case 2 (shrink to sqrt(delta) alpha),
and the potential alpha xi^{1+delta} must grow by (1+delta^2)/2 per level
whenever the quadratic hypothesis holds.
"""
import numpy as np

from symgap.audit import (
    AmplificationState,
    amplification_step,
    hypothesis_satisfying_distribution,
    run_amplification,
)

delta = 0.05
state = AmplificationState(0, 1.0, 0.7, delta)
rng = np.random.default_rng(4)

print(f"delta = {delta}   (profile: {state.profile}, eps = delta^4 = {state.eps:.2e})")
print(f"{'j':>2} {'case':>4} {'alpha':>9} {'xi':>9} {'potential':>11} {'holds':>6}")
print(f"{0:>2} {'-':>4} {state.alpha:9.5f} {state.xi:9.5f} {state.potential:11.6f}")
for _ in range(5):
    xs, ws = hypothesis_satisfying_distribution(state, rng)
    state, cert = amplification_step(state, xs, ws)
    print(
        f"{state.j:>2} {cert.case:>4} {state.alpha:9.5f} {state.xi:9.5f}"
        f" {state.potential:11.6f} {str(cert.holds):>6}"
    )

print()
rep = run_amplification(ell=5, delta=delta, c=0.7, seed=4)
print("telescoped floor ((1+d^2)/2)^5 c^{1+d} =", rep["telescoped_target"])
print("final potential                        =", rep["potential"])
print("telescoping holds:", rep["telescoping_ok"], " feasibility floor:", rep["feasibility_floor_ok"])
