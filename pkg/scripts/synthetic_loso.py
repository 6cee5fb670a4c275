"""Leave-one-subject-out accuracy on a synthetic corpus.

    python3 scripts/synthetic_loso.py --windows 1.0,0.3 --snr 0
"""
import argparse

from ssvepnet.experiments import synthetic_loso


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--windows", default="1.0,0.3")
    ap.add_argument("--snr", type=float, default=0.0)
    ap.add_argument("--subjects", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for w in (float(v) for v in args.windows.split(",")):
        out = synthetic_loso(args.snr, w, subjects=args.subjects, seed=args.seed,
                             progress=lambda s: print("  " + s, flush=True))
        print(f"window {w:.2f} s  mean {out.mean:.3f}  ({out.seconds:.0f} s)", flush=True)


if __name__ == "__main__":
    main()
