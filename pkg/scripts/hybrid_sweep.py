"""t_on sweep of the hybrid sampler through ``stardiff sweep``.

Fits the corpus, writes the denoiser checkpoint and chain, then runs the CLI
sweep so the CSV (with its winner flag) is exactly what a user would get.
Also prints the exact TV of the hybrid sampler on a tiny enumerable instance.
"""

import argparse
from pathlib import Path

from stardiff.cli import main as cli
from stardiff.corpus import write_chain
from stardiff.denoiser import save_denoiser
from stardiff.experiments import build_corpus, hybrid_tv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/hybrid")
    ap.add_argument("--steps", type=int, default=16)
    ap.add_argument("--seeds", type=int, default=8)
    ap.add_argument("--count", type=int, default=256)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    corpus = build_corpus()
    save_denoiser(out / "denoiser.json", corpus.denoiser)
    write_chain(out / "chain.json", corpus.chain)
    cli([
        "sweep", "--denoiser", str(out / "denoiser.json"), "--chain", str(out / "chain.json"),
        "--sampler", "hybrid", "--length", str(corpus.length), "--steps", str(args.steps),
        "--param", "t_on", "--seeds", str(args.seeds), "--count", str(args.count), "--out", str(out),
    ])
    for t_on in (0.0, 0.3, 0.5, 1.0):
        print(f"enumerable V=2,L=3,T=3 t_on={t_on}: TV {hybrid_tv(t_on):.5f}")


if __name__ == "__main__":
    main()
