"""Prevalence-dependent regions over (b, r_c/r_d), including the oscillatory band."""

from _common import agreement, label_map, parser, run


def main():
    args = parser(__doc__, "fig3").parse_args()
    doc, rows = run(args)
    print("simulated")
    print(label_map(doc, rows))
    print("\nanalytic (~ marks an unstable coexistence state)")
    print(label_map(doc, [dict(r, analytic_label="oscillation" if r["analytic_label"] == "E05_unstable" else r["analytic_label"]) for r in rows], key="analytic_label"))
    hits, total = agreement(rows)
    print(f"\nsimulated == analytic in {hits}/{total} decided cells; outputs in {args.out}")


if __name__ == "__main__":
    main()
