"""Learned detectors against the optimal ones.

Trains the per-edge binary nets and the 4-class cloud net on simulated data
of growing size, then evaluates all detectors on the same fresh trials.
"""

from tbma import default_config
from tbma.experiments import estimate_pe
from tbma.learning import evaluate_pe, fit_learned

EVAL_TRIALS = 10_000
EVAL_SEED = 99
EPOCHS = 1000


def main():
    cfg = default_config()
    for kind in ("EdgeOptimal", "CloudOptimal"):
        rec = estimate_pe(cfg, kind, EVAL_TRIALS, EVAL_SEED)
        print(f"{kind:<13} P_e={rec.pe:.4f} [{rec.ci_lo:.4f}, {rec.ci_hi:.4f}]")
    for kind in ("EdgeLearned", "CloudLearned"):
        for n in (100, 1000, 10_000):
            det = fit_learned(cfg, kind, n, seed=5, epochs=EPOCHS)
            pe, lo, hi = evaluate_pe(det, cfg, EVAL_TRIALS, EVAL_SEED)
            print(f"{kind:<13} N={n:<6} P_e={pe:.4f} [{lo:.4f}, {hi:.4f}]  final loss {det.losses[0][-1]:.4f}")


if __name__ == "__main__":
    main()
