"""Star-loop against G-Star-loop on the 4-state cyclic corpus at matched step budgets."""

import argparse
import time

from stardiff.experiments import build_corpus, guided_vs_unguided


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--count", type=int, default=256)
    ap.add_argument("--tau-remask", type=float, default=8.0)
    args = ap.parse_args()
    t0 = time.time()
    corpus = build_corpus()
    print(f"validation AUC {corpus.val_auc:.4f}")
    for T in args.steps:
        r = guided_vs_unguided(corpus, T, args.seeds, args.count, args.tau_remask)
        print(
            f"T={T}: star-loop {r.unguided.mean():.4f}  g-star-loop(learned) {r.learned.mean():.4f} "
            f"(p={r.p_learned:.2e})  g-star-loop(reference) {r.reference.mean():.4f} "
            f"(gap {r.gap_reference:.4f}, unguided SE {r.unguided_se:.4f})"
        )
    print(f"elapsed {time.time() - t0:.1f}s")


if __name__ == "__main__":
    main()
