"""Constant-payoff regions over (b, r_c - r_d): simulated labels against the analytic ones."""

from _common import agreement, label_map, parser, run


def main():
    args = parser(__doc__, "fig2").parse_args()
    doc, rows = run(args)
    print(label_map(doc, rows))
    hits, total = agreement(rows)
    print(f"\nsimulated == analytic in {hits}/{total} decided cells; outputs in {args.out}")


if __name__ == "__main__":
    main()
