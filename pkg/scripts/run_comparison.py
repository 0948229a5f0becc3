"""Train the unfolded detector, then sweep it against max-log MPA with the same depth."""
import argparse
from pathlib import Path

from scma_unfold.codec import load_codebook
from scma_unfold.ser import MLDetector, MPADetector, NetworkDetector, SweepConfig, run_sweep, write_csv
from scma_unfold.training import TrainConfig, train
from scma_unfold.unfolded import load_checkpoint


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--blocks", type=int, default=4)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--train-snr-db", type=float, default=16.0)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--ckpt", default=None, help="reuse a checkpoint instead of training")
    ap.add_argument("--with-ml", action="store_true", help="add the exhaustive ML oracle")
    ap.add_argument("--snr-stop", type=float, default=21.0)
    ap.add_argument("--max-trials", type=int, default=4_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out-dir", default="results")
    a = ap.parse_args()

    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cb = load_codebook()
    if a.ckpt:
        params = load_checkpoint(a.ckpt, cb.graph)
    else:
        cfg = TrainConfig(T=a.blocks, lr=a.lr, steps=a.steps, train_snr_db=a.train_snr_db, seed=a.seed)
        res = train(cb, cfg, checkpoint=out / f"nn_T{a.blocks}_seed{a.seed}.json",
                    log_csv=out / f"loss_T{a.blocks}_seed{a.seed}.csv")
        params = res.params
        print(f"loss {res.losses[0]:.5f} -> {res.losses[-1]:.5f}")

    dets = [NetworkDetector(params), MPADetector(params.T, "max-log")]
    if a.with_ml:
        dets.append(MLDetector())
    sweep = SweepConfig(0.0, a.snr_stop, 3.0, 100, a.max_trials, a.seed, a.workers)
    results = run_sweep(dets, cb, sweep)
    write_csv(results, out / f"comparison_T{params.T}_seed{a.seed}.csv")
    for r in sorted(results, key=lambda r: (r.snr_db, r.detector)):
        print(f"{r.snr_db:5.1f} dB  {r.detector:11s} SER {r.ser:.3e} +- {r.ci95:.1e}  ({r.errors} errors)")


if __name__ == "__main__":
    main()
