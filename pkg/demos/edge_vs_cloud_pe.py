"""Monte Carlo error probability of the optimal edge and cloud detectors.

Sweeps the inter-cell channel variance and the fronthaul capacity at the
default operating point and prints P_e with its Wilson 95% interval.
"""

import sys

from tbma import default_config
from tbma.experiments import estimate_pe

TRIALS = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000


def show(label, rec):
    print(f"  {label:<22} {rec.detector:<13} P_e={rec.pe:.4f} [{rec.ci_lo:.4f}, {rec.ci_hi:.4f}]")


def main():
    print(f"{TRIALS} trials per point")
    print("inter-cell variance sigma2_G")
    for s2g in (0.5, 1.0, 2.0, 4.0):
        cfg = default_config(sigma2_g=s2g)
        for kind in ("EdgeOptimal", "CloudOptimal"):
            show(f"sigma2_G={s2g}", estimate_pe(cfg, kind, TRIALS, seed=1))

    print("fronthaul capacity C (cloud only)")
    for c in (0.25, 1.0, 5.0):
        show(f"C={c}", estimate_pe(default_config(fronthaul_capacity=c), "CloudOptimal", TRIALS, seed=2))

    print("reuse mode at sigma2_G=4 (edge only)")
    for mode in ("NonOrthogonal", "Orthogonal"):
        show(mode, estimate_pe(default_config(sigma2_g=4.0, reuse_mode=mode), "EdgeOptimal", TRIALS, seed=3))


if __name__ == "__main__":
    main()
