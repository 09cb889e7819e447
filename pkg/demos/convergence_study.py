"""
Convergence orders
==================

Interpolation and discretization errors of second-order geodesic finite
elements for the sphere-valued test problem, on four nested meshes.  Expect
d_L2 to decay like h^3 and D_12 like h^2.
"""
from gfe.bench import RunConfig, interpolation_study, run

for kind, fn in (("interpolation", interpolation_study), ("solve", run)):
    result = fn(RunConfig("P2", order=2, levels=4, out="/dev/null"))
    print(kind)
    print(f"{'h':>10} {'d_L2':>12} {'D_12':>12}")
    for s in result.report.samples:
        print(f"{s.h:10.5f} {s.d_L2:12.4e} {s.D_12:12.4e}")
    print("EOC d_L2:", ["%.3f" % e for e in result.report.eoc_L2])
    print("EOC D_12:", ["%.3f" % e for e in result.report.eoc_D12])
