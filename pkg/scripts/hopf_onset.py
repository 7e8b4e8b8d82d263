"""Period just past the Hopf threshold compared with 2*pi/sqrt(a1), as k/k_c grows."""

import argparse

from mosqgame.analysis import oscillation_metrics
from mosqgame.config import resolve
from mosqgame.equilibria import e05
from mosqgame.integrator import IntegratorConfig, integrate
from mosqgame.model import State
from mosqgame.stability import hopf_analysis, onset_period


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--preset", default="fig4")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--factors", type=float, nargs="+", default=[1.02, 1.05, 1.1, 1.25, 1.5, 2.0, 4.0])
    ap.add_argument("--t1", type=float, default=3000.0)
    args = ap.parse_args()

    base = resolve(preset_name=args.preset, overrides=args.set).model_params()
    h = hopf_analysis(base)
    if h is None or h.k_c is None:
        raise SystemExit("no Hopf threshold for these parameters")
    target = onset_period(base)
    print(f"k_c = {h.k_c:.6g}, linear period 2*pi/sqrt(a1) = {target:.3f} d")
    print(f"{'k/k_c':>7} {'period':>9} {'rel.diff':>9} {'amp L_v':>11}")
    for f in args.factors:
        p = base.replace(k=f * h.k_c)
        s = e05(p).state
        traj = integrate(p, State(1.01 * s.L_v, s.A_v, s.w), (0.0, args.t1), IntegratorConfig(sample_stride=0.5))
        try:
            m = oscillation_metrics(traj, K_max=p.K_max)
        except ValueError as exc:
            print(f"{f:7.3f}  {type(exc).__name__}")
            continue
        print(f"{f:7.3f} {m.period:9.3f} {m.period / target - 1:+9.3f} {m.L_v.amplitude:11.4g}")


if __name__ == "__main__":
    main()
