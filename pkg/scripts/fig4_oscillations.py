"""Amplitude and period of the limit cycle across N and r_c/r_d."""

import math

from _common import parser, run

REFERENCE_PERIODS = (50.0, 86.0, 109.0, 165.0)


def main():
    args = parser(__doc__, "fig4").parse_args()
    doc, rows = run(args, metrics=True)

    osc = [r for r in rows if r["simulated_label"] == "oscillation" and r["period_L_v"]]
    print(f"{len(osc)}/{len(rows)} cells oscillate")
    print(f"{'N':>6} {'r_c/r_d':>9} {'amp L_v':>11} {'period':>8}")
    step = max(1, len(osc) // 24)
    for r in osc[::step]:
        print(f"{float(r['N']):6.3f} {float(r['ratio']):9.0f} {float(r['amplitude_L_v']):11.4g} {float(r['period_L_v']):8.2f}")

    periods = [float(r["period_L_v"]) for r in osc]
    if periods:
        print(f"\nperiod range {min(periods):.1f} .. {max(periods):.1f} days")
        for ref in REFERENCE_PERIODS:
            near = min(periods, key=lambda p: abs(p - ref))
            print(f"  closest to {ref:5.0f} d: {near:6.1f} d")

    print("\nSpearman correlations along N at fixed r_c/r_d")
    for t in doc["trend_summary"] or []:
        print(f"  {t['axis2']:9.0f}: amplitude {t['spearman_N_amplitude']:+.2f}  period {t['spearman_N_period']:+.2f}")
    bad = [t for t in doc["trend_summary"] or [] if math.isnan(t["spearman_N_amplitude"])]
    if bad:
        print(f"  ({len(bad)} columns without a defined correlation)")
    print(f"\noutputs in {args.out}")


if __name__ == "__main__":
    main()
