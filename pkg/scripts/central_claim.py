"""Scaled-down central claim: full model vs DLC-only ablation on the seasonal-chaotic fixture.

Trains one model per seed, rolls it out closed-loop for the horizon and
reports the mean per-step RMSE and the log-error slope of both variants.
``--compare-unit-kl`` repeats every run with KL weight 1 applied in
normalized space, where the ITC posterior collapses onto the prior.

    python3 scripts/central_claim.py --seeds 0 1 2 3 4
"""

import argparse
import dataclasses
import time

from chaotrack.experiments import ClaimConfig, central_claim_run


def report(label, results):
    print(f"\n{label}")
    print(f"{'seed':>4} {'kl_w':>7} {'full':>8} {'ablation':>8} {'ratio':>6} {'slope':>8} {'abl.slope':>9} {'final KL':>9}")
    for r in results:
        print(
            f"{r.seed:>4} {r.kl_weight:>7.4f} {r.full_rmse:>8.4f} {r.ablation_rmse:>8.4f} "
            f"{r.rmse_ratio:>6.3f} {r.full_slope:>8.4f} {r.ablation_slope:>9.4f} {r.final_kl:>9.4f}"
        )
    wins = sum(r.rmse_ratio <= 0.6 and r.full_slope < r.ablation_slope for r in results)
    print(f"seeds with ratio <= 0.6 and a smaller slope: {wins}/{len(results)}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    parser.add_argument("--epochs", type=int, default=ClaimConfig.epochs)
    parser.add_argument("--horizon", type=int, default=ClaimConfig.horizon)
    parser.add_argument("--compare-unit-kl", action="store_true")
    args = parser.parse_args()

    cfg = ClaimConfig(epochs=args.epochs, horizon=args.horizon)
    start = time.perf_counter()
    report("KL weight matched to raw units (default)", [central_claim_run(s, cfg) for s in args.seeds])
    if args.compare_unit_kl:
        unit = dataclasses.replace(cfg, kl_weight=1.0)
        report("KL weight 1 in normalized space", [central_claim_run(s, unit) for s in args.seeds])
    print(f"\n{time.perf_counter() - start:.0f}s")


if __name__ == "__main__":
    main()
