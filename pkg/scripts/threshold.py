"""Learn the spectral threshold alone on tone-plus-noise trials and report the trace."""
import argparse

from ssvepnet.experiments import threshold_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=512)
    ap.add_argument("--samples", type=int, default=128)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    out = threshold_experiment(args.trials, args.samples, args.epochs, args.lr, args.seed)
    for epoch in range(0, len(out.trace), 10):
        print(f"epoch {epoch:4d}  theta {out.trace[epoch]:.4f}")
    print(f"final theta {out.final_theta:.4f}, last step {out.last_step:.2e}")
    print(f"noise bins removed {out.noise_removed:.3f}, fundamental kept {out.fundamental_kept:.3f}")


if __name__ == "__main__":
    main()
