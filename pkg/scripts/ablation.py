"""Full model against the no-ASDM and no-augmentation variants on a noisy synthetic corpus.

    python3 scripts/ablation.py --snr -5 --window 0.3
"""
import argparse

from ssvepnet.experiments import synthetic_loso

VARIANTS = {
    "full": dict(use_asdm=True, use_augment=True),
    "no-asdm": dict(use_asdm=False, use_augment=True),
    "no-augment": dict(use_asdm=True, use_augment=False),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--snr", type=float, default=-5.0)
    ap.add_argument("--window", type=float, default=0.3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    means = {}
    for name, flags in VARIANTS.items():
        out = synthetic_loso(args.snr, args.window, seed=args.seed, **flags)
        means[name] = out.mean
        accs = " ".join(f"{a:.3f}" for a in out.accuracies)
        print(f"{name:<11} mean {out.mean:.3f}  [{accs}]  ({out.seconds:.0f} s)", flush=True)
    gap = means["full"] - max(means["no-asdm"], means["no-augment"])
    print(f"full minus best ablation: {100 * gap:+.1f} points")


if __name__ == "__main__":
    main()
