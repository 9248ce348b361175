"""Command-line entry point: ``stardiff <command> ...``.

Exit codes: 0 success, 2 usage error, 3 budget or configuration error,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import shutil
import sys
import warnings
from pathlib import Path

import numpy as np

from .core import FAMILIES, SCHEDULES, SIGMA_KINDS, ConfigError, RunConfig, StardiffError, seeded_stream
from .corpus import DyckSource, MarkovChain, cyclic_chain, dyck_sample, markov_exact, markov_logprob, markov_sample, read_chain, read_dataset, sticky_chain, write_chain, write_dataset
from .denoiser import MarkovOracleDenoiser, load_denoiser, save_denoiser, tabular_fit
from .metrics import infill_accuracy, mean_diversity, oracle_ppl_report
from .noise import NoiseSchedule, sigma_max
from .predictor import EntropyPredictor, LogisticHyper, SurprisalPredictor, load_predictor, make_training_set, roc_auc, save_predictor, train_logistic
from .samplers import generate, loop_plan, plan_steps
from .verify import DEFAULT_BUDGET, BudgetError, empirical, enumerate_sampler, run_battery, tv_distance

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_VERIFY = 0, 2, 3, 4
GUIDED = ("gstar", "gstar-loop")
LOOPS = ("loop", "gstar-loop")
SCHEMA_PATH = Path(__file__).with_name("report.schema.json")

SWEEP_GRIDS = {
    "t_on": [round(0.1 * k, 1) for k in range(11)],
    "eta": [round(0.02 * k, 2) for k in range(11)],
    "tau_remask": [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
    "loop_steps": [1, 2, 4, 8],
    "T": [8, 16, 32, 64],
}
SWEEP_FIELD = {"t_on": "t_on", "eta": "eta", "tau_remask": "tau_remask", "loop_steps": "loop_steps", "T": "total_steps"}


class UsageError(StardiffError):
    pass


class SplitError(StardiffError, ValueError):
    pass


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:12]


def _rows(spec: str | None, n: int, default: tuple[int, int]) -> tuple[int, int]:
    """Parse ``a:b`` into a half-open row range clipped to ``n``."""
    if spec is None:
        a, b = default
    else:
        try:
            a_s, b_s = spec.split(":")
            a = int(a_s) if a_s else 0
            b = int(b_s) if b_s else n
        except ValueError:
            raise UsageError(f"row range {spec!r} is not of the form a:b") from None
    a, b = max(0, min(a, n)), max(0, min(b, n))
    if a >= b:
        raise UsageError(f"row range {a}:{b} is empty")
    return a, b


def parse_clamp(specs: list[str] | None) -> list[list[int]]:
    """``"a:b=t0,t1,..."`` fixes positions a..b-1; ``"p=t"`` fixes one position."""
    out = []
    for s in specs or []:
        try:
            where, toks = s.split("=")
            ids = [int(t) for t in toks.split(",") if t.strip()]
            if ":" in where:
                a, b = (int(v) for v in where.split(":"))
            else:
                a = int(where)
                b = a + 1
        except ValueError:
            raise UsageError(f"bad --clamp {s!r}; expected a:b=ids") from None
        if b - a != len(ids):
            raise UsageError(f"--clamp {s!r} covers {b - a} positions but lists {len(ids)} tokens")
        out += [[p, t] for p, t in zip(range(a, b), ids)]
    return out


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


# -- gen-data ----------------------------------------------------------------


def _chain_from_args(args) -> MarkovChain:
    if args.chain:
        return read_chain(args.chain)
    if args.preset:
        if args.vocab is None:
            raise UsageError("--preset needs --vocab")
        build = {"sticky": sticky_chain, "cyclic": cyclic_chain}[args.preset]
        return build(args.vocab, args.param)
    raise UsageError("--kind markov needs a chain: pass --chain spec.json or --preset")


def cmd_gen_data(args) -> int:
    if args.vocab is not None and args.vocab < 2:
        raise UsageError("--vocab must be >= 2")
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rng = seeded_stream(args.seed, 0)
    if args.kind == "markov":
        mc = _chain_from_args(args)
        if args.vocab is not None and args.vocab != mc.size:
            raise UsageError(f"--vocab {args.vocab} disagrees with the chain size {mc.size}")
        seqs = markov_sample(mc, args.length, rng, args.count) if args.count else []
        spec = {"kind": "markov", "chain": mc.to_dict(), "length": args.length, "count": args.count, "seed": args.seed}
    else:
        ds = DyckSource(args.k, args.max_depth, args.length)
        seqs = [dyck_sample(ds, rng) for _ in range(args.count)]
        spec = {"kind": "dyck", "k": args.k, "max_depth": args.max_depth, "length": args.length, "count": args.count, "seed": args.seed}
    write_dataset(out, seqs)
    Path(str(out) + ".spec.json").write_text(json.dumps(spec, sort_keys=True, indent=2) + "\n")
    if args.kind == "markov":
        write_chain(str(out) + ".chain.json", mc)
    return EXIT_OK


# -- train -------------------------------------------------------------------


def _load_rows(path, vocab=None) -> np.ndarray:
    seqs = read_dataset(path, vocab_size=vocab)
    if not seqs:
        raise ConfigError(f"{path} holds no sequences")
    if len({len(s) for s in seqs}) != 1:
        raise ConfigError(f"{path} mixes sequence lengths")
    return np.stack(seqs)


def cmd_train(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.target == "denoiser":
        if args.oracle:
            if not args.chain:
                raise UsageError("--oracle needs --chain")
            save_denoiser(out, MarkovOracleDenoiser(read_chain(args.chain)))
            return EXIT_OK
        if not args.data or args.vocab is None:
            raise UsageError("tabular denoiser training needs --data and --vocab")
        x = _load_rows(args.data, args.vocab)
        a, b = _rows(args.rows, len(x), (0, len(x)))
        model = tabular_fit(x[a:b], NoiseSchedule(args.schedule, 1), seeded_stream(args.seed, 0), args.vocab, args.smoothing, args.repeats)
        save_denoiser(out, model, extra={"data_digest": _digest(args.data), "rows": [a, b]})
        return EXIT_OK

    # predictor
    if args.kind == "surprisal":
        if not args.chain:
            raise UsageError("--kind surprisal needs --chain")
        save_predictor(out, SurprisalPredictor(read_chain(args.chain)))
        return EXIT_OK
    if args.kind == "entropy":
        save_predictor(out, EntropyPredictor())
        return EXIT_OK
    if not args.data or not args.denoiser:
        raise UsageError("logistic predictor training needs --data and --denoiser")
    meta = json.loads(Path(args.denoiser).read_text())
    den = load_denoiser(meta)
    x = _load_rows(args.data, den.vocab_size)
    n = len(x)
    cut = int(round(0.8 * n))
    tr = _rows(args.train_rows, n, (0, cut))
    va = _rows(args.val_rows, n, (cut, n))
    if tr[0] < va[1] and va[0] < tr[1]:
        raise SplitError(f"train rows {tr[0]}:{tr[1]} overlap validation rows {va[0]}:{va[1]}")
    if meta.get("data_digest") == _digest(args.data):
        d0, d1 = meta["rows"]
        for name, (a, b) in (("train", tr), ("validation", va)):
            if a < d1 and d0 < b:
                raise SplitError(f"predictor {name} rows {a}:{b} overlap the denoiser's rows {d0}:{d1}")
    sched = NoiseSchedule(args.schedule, 1)
    rng = seeded_stream(args.seed, 0)
    tset = make_training_set(x[tr[0] : tr[1]], den, sched, rng, args.tau_diffuse)
    vset = make_training_set(x[va[0] : va[1]], den, sched, seeded_stream(args.seed, 1), args.tau_diffuse)
    hyper = LogisticHyper(lr=args.lr, epochs=args.epochs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pred, curve = train_logistic(tset, hyper)
    save_predictor(out, pred)
    carried = ~tset.fresh
    report = {
        "train_rows": list(tr),
        "val_rows": list(va),
        "label_balance": {"positive": int(tset.y.sum()), "negative": int(len(tset.y) - tset.y.sum())},
        "constant_predictor": bool(pred.degenerate),
        "carry_over_positive_labels": int(tset.y[carried].sum()),
        "loss_curve": curve,
        "val_auc": roc_auc(vset.X @ pred.weights, vset.y),
    }
    Path(args.report or str(out.with_suffix("")) + ".report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


# -- sample ------------------------------------------------------------------

SAMPLE_ONLY_FOR = {
    "eta": ("remdm",),
    "sigma_kind": ("remdm",),
    "sigma_window": ("remdm",),
    "t_on": ("hybrid", "gstar"),
    "tau_remask": GUIDED,
    "n_remask": GUIDED + ("loop",),
    "alpha_on": LOOPS,
    "loop_fraction": LOOPS,
    "loop_steps": LOOPS,
    "one_per_step": ("mdlm",),
}


def build_config(args, vocab: int) -> RunConfig:
    """Resolve a RunConfig from ``--config`` plus explicitly passed flags."""
    base = RunConfig.from_json(Path(args.config).read_text()).to_dict() if args.config else {}
    flags = {
        "sampler": args.sampler,
        "sequence_length": args.length,
        "total_steps": args.steps,
        "schedule": args.schedule,
        "t_on": args.t_on,
        "eta": args.eta,
        "sigma_kind": args.sigma_kind,
        "sigma_window": args.sigma_window,
        "alpha_on": args.alpha_on,
        "loop_fraction": args.loop_fraction,
        "loop_steps": args.loop_steps,
        "tau_remask": args.tau_remask,
        "tau_diffuse": args.tau_diffuse,
        "n_remask": args.n_remask,
        "one_per_step": args.one_per_step or None,
        "base_seed": args.seed,
    }
    given = {k: v for k, v in flags.items() if v is not None}
    sampler = given.get("sampler", base.get("sampler", "mdlm"))
    for key, fams in SAMPLE_ONLY_FOR.items():
        if key in given and sampler not in fams:
            raise UsageError(f"--{key.replace('_', '-')} conflicts with --sampler {sampler} (only valid for {', '.join(fams)})")
    if "eta" in given and given.get("sigma_kind", base.get("sigma_kind", "off")) == "off":
        given["sigma_kind"] = "cap"
    cfg = {**base, **given, "vocab": vocab}
    if args.clamp:
        cfg["clamped"] = parse_clamp(args.clamp)
    return RunConfig.from_dict(cfg)


def _load_models(args):
    if not args.denoiser:
        raise UsageError("--denoiser checkpoint is required")
    den = load_denoiser(args.denoiser)
    pred = load_predictor(args.predictor) if getattr(args, "predictor", None) else None
    return den, pred


def plan_metadata(cfg: RunConfig) -> dict:
    meta = {"steps": len(plan_steps(cfg))}
    if cfg.sampler in LOOPS:
        lp = loop_plan(cfg)
        meta["loop_plan"] = {"draft": lp.draft_steps, "loop": lp.loop_steps, "finish": lp.finish_steps, "alpha_on": lp.alpha_on}
    return meta


def sample_run(cfg: RunConfig, args, den, pred, out_root: Path, dump_traj: bool = False) -> Path:
    """Generate into ``out_root/<hash>/``; shared by ``sample`` and ``sweep``."""
    if cfg.sampler in GUIDED and pred is None:
        raise UsageError(f"--sampler {cfg.sampler} needs --predictor")
    if cfg.sampler not in GUIDED and pred is not None:
        raise UsageError(f"--predictor conflicts with --sampler {cfg.sampler} (only valid for {', '.join(GUIDED)})")
    key = {
        "config": cfg.to_dict(),
        "count": args.count,
        "denoiser": _digest(args.denoiser),
        "predictor": _digest(args.predictor) if pred is not None else None,
    }
    run_id = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:12]
    run = out_root / run_id
    run.mkdir(parents=True, exist_ok=True)
    samples, trajs = generate(cfg, den, args.count, predictor=pred, workers=args.workers, keep_trajectories=dump_traj)
    write_dataset(run / "samples.jsonl", samples)
    (run / "config.json").write_text(cfg.to_json())
    meta = {"run_id": run_id, "count": args.count, "plan": plan_metadata(cfg), "denoiser": key["denoiser"], "predictor": key["predictor"]}
    (run / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    shutil.copyfile(args.denoiser, run / "denoiser.json")
    if pred is not None:
        shutil.copyfile(args.predictor, run / "predictor.json")
    if dump_traj:
        lines = []
        seq = 0
        for t in trajs:
            for b in range(t.final.shape[0]):
                lines += t.dump_lines(b, seq)
                seq += 1
        (run / "traj.jsonl").write_text("".join(l + "\n" for l in lines))
    return run


def cmd_sample(args) -> int:
    den, pred = _load_models(args)
    cfg = build_config(args, den.vocab_size)
    run = sample_run(cfg, args, den, pred, Path(args.out), args.dump_traj)
    print(run)
    return EXIT_OK


# -- eval --------------------------------------------------------------------

METRICS = ("ppl", "div", "similarity", "infill", "tv", "tv_samples")


def _load_traj(path) -> dict[int, list[list[int]]]:
    cands: dict[int, list] = {}
    with open(path) as f:
        for line in f:
            r = json.loads(line)
            cands.setdefault(r["sequence"], []).append(r["candidate"])
    return cands


def evaluate(run: Path, metrics: list[str], chain: MarkovChain | None, truth_path=None, budget=DEFAULT_BUDGET) -> list[tuple[str, float]]:
    """Metric rows for a run directory; shared by ``eval`` and ``sweep``."""
    cfg = RunConfig.from_json((run / "config.json").read_text())
    samples = np.array(read_dataset(run / "samples.jsonl", cfg.vocab)).reshape(-1, cfg.sequence_length)
    rows = []
    for m in metrics:
        if m in ("ppl", "tv", "tv_samples") and chain is None:
            raise UsageError(f"metric {m} needs --chain")
        if m == "ppl":
            rep = oracle_ppl_report(chain, samples)
            rows += [("ppl", rep.value), ("ppl_impossible", rep.impossible)]
            if len(samples) > 1:
                nll = -np.atleast_1d(markov_logprob(chain, samples)) / cfg.sequence_length
                rows.append(("nll_se", float(nll.std(ddof=1) / np.sqrt(len(nll)))))
        elif m == "div":
            rows.append(("div", mean_diversity(samples)))
        elif m == "similarity":
            tp = run / "traj.jsonl"
            if not tp.exists():
                raise UsageError("metric similarity needs a run sampled with --dump-traj")
            cands = _load_traj(tp)
            curves = []
            for c in cands.values():
                a = np.array(c)
                curves.append((a[1:] == a[:-1]).mean(axis=1))
            rows.append(("similarity_mean", float(np.mean(curves))))
            for k, v in enumerate(np.mean(curves, axis=0)):
                rows.append((f"similarity_step_{k}", float(v)))
        elif m == "infill":
            if truth_path is None:
                raise UsageError("metric infill needs --truth")
            truth = np.stack(read_dataset(truth_path, cfg.vocab))
            if len(truth) != len(samples):
                raise ConfigError(f"--truth has {len(truth)} rows, samples have {len(samples)}")
            pos = set(np.nonzero(~cfg.clamp_mask)[0].tolist())
            rows.append(("infill", float(np.mean([infill_accuracy(t, g, pos) for t, g in zip(truth, samples)]))))
        elif m == "tv":
            den = load_denoiser(run / "denoiser.json")
            pp = run / "predictor.json"
            pred = load_predictor(pp) if pp.exists() else None
            exact = enumerate_sampler(cfg, den, predictor=pred, budget=budget)
            rows.append(("tv", tv_distance(exact, markov_exact(chain, cfg.sequence_length))))
        elif m == "tv_samples":
            outcomes = chain.size ** cfg.sequence_length
            if outcomes > budget:
                raise BudgetError(outcomes, budget)
            rows.append(("tv_samples", tv_distance(empirical(samples), markov_exact(chain, cfg.sequence_length))))
        else:
            raise UsageError(f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
    return rows


def cmd_eval(args) -> int:
    run = Path(args.run)
    if not (run / "config.json").exists():
        raise UsageError(f"{run} is not a run directory (no config.json)")
    chain = read_chain(args.chain) if args.chain else None
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    rows = evaluate(run, metrics, chain, args.truth, args.budget)
    cid = run.name
    _write_csv(run / "metrics.csv", ["config_id", "metric", "value"], [(cid, k, _fmt(v)) for k, v in rows])
    side = {"config": json.loads((run / "config.json").read_text()), "metrics": {k: v for k, v in rows}}
    (run / "metrics.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    sys.stdout.write((run / "metrics.csv").read_text())
    return EXIT_OK


# -- sweep -------------------------------------------------------------------


def _sigma_valid(cfg: RunConfig) -> bool:
    return all(0.0 <= s.sigma <= sigma_max(s.alpha_t, s.alpha_s) + 1e-15 for s in plan_steps(cfg))


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_GRIDS:
        raise UsageError(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_GRIDS)}")
    values = [float(v) for v in args.values.split(",")] if args.values else SWEEP_GRIDS[args.param]
    if args.param in ("loop_steps", "T"):
        values = [int(v) for v in values]
    den, pred = _load_models(args)
    base = build_config(args, den.vocab_size)
    chain = read_chain(args.chain) if args.chain else None
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    field = SWEEP_FIELD[args.param]
    fams = SAMPLE_ONLY_FOR.get(field)
    if fams and base.sampler not in fams:
        raise UsageError(f"sweeping {args.param} has no effect on --sampler {base.sampler} (only valid for {', '.join(fams)})")
    if field == "eta" and base.sigma_kind == "off":
        base = base.replace(sigma_kind="cap")
    out = Path(args.out)
    cells = []
    for v in values:
        per_seed = []
        for j in range(args.seeds):
            cfg = RunConfig.from_dict({**base.to_dict(), field: v, "base_seed": base.base_seed + j})
            run = sample_run(cfg, args, den, pred, out)
            per_seed.append(dict(evaluate(run, metrics, chain, None, args.budget)))
        cell = {k: float(np.mean([r[k] for r in per_seed])) for k in per_seed[0]}
        if args.seeds > 1 and "ppl" in cell:
            cell["ppl_seed_se"] = float(np.std([r["ppl"] for r in per_seed], ddof=1) / np.sqrt(args.seeds))
        cell["config_hash"] = RunConfig.from_dict({**base.to_dict(), field: v}).config_hash()
        cell["sigma_valid"] = _sigma_valid(cfg)
        cells.append((v, cell))
    score = "ppl" if "ppl" in cells[0][1] else None
    best = min(range(len(cells)), key=lambda i: (cells[i][1][score], i)) if score else None
    keys = sorted({k for _, c in cells for k in c} - {"config_hash", "sigma_valid"})
    header = [args.param, "config_hash", *keys, "sigma_valid", "winner"]
    rows = [[_fmt(v), c["config_hash"], *(_fmt(c.get(k, "")) for k in keys), str(c["sigma_valid"]).lower(), str(i == best).lower()] for i, (v, c) in enumerate(cells)]
    sweep_id = hashlib.sha256(json.dumps([args.param, values, base.to_dict(), args.seeds, args.count], sort_keys=True).encode()).hexdigest()[:12]
    path = out / f"sweep-{args.param}-{sweep_id}.csv"
    _write_csv(path, header, rows)
    sys.stdout.write(path.read_text())
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def cmd_verify(args) -> int:
    rows = run_battery(sim_runs=args.sim_runs, workers=args.workers if args.workers is not None else 1)
    text = json.dumps({"checks": rows, "pass": all(r["pass"] for r in rows)}, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for r in rows:
        if not r["pass"]:
            print(f"FAIL {r['check']} [{r['instance']}] {r['metric']}={r['value']:.3g} > {r['tolerance']:.3g}", file=sys.stderr)
    return EXIT_OK if all(r["pass"] for r in rows) else EXIT_VERIFY


# -- parser ------------------------------------------------------------------


def _sampling_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="RunConfig JSON; explicit flags override it")
    p.add_argument("--denoiser", help="denoiser checkpoint")
    p.add_argument("--predictor", help="error-predictor checkpoint (guided samplers)")
    p.add_argument("--sampler", choices=FAMILIES)
    p.add_argument("--length", type=int)
    p.add_argument("--steps", type=int, help="total step budget T")
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--t-on", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--sigma-kind", choices=SIGMA_KINDS)
    p.add_argument("--sigma-window", type=int, nargs=2, metavar=("START", "STOP"))
    p.add_argument("--alpha-on", type=float)
    p.add_argument("--loop-fraction", type=float)
    p.add_argument("--loop-steps", type=int)
    p.add_argument("--tau-remask", type=float)
    p.add_argument("--tau-diffuse", type=float)
    p.add_argument("--n-remask", type=int)
    p.add_argument("--one-per-step", action="store_true")
    p.add_argument("--clamp", action="append", help='fixed tokens, e.g. "0:3=1,0,2"')
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="thread pool size (default: $STARDIFF_WORKERS or 1)")
    p.add_argument("--out", default="out")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stardiff", description="Masked discrete diffusion samplers with exact checks")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="sample a synthetic corpus")
    g.add_argument("--kind", choices=("markov", "dyck"), required=True)
    g.add_argument("--chain", help="Markov chain JSON")
    g.add_argument("--preset", choices=("sticky", "cyclic"), help="built-in chain instead of --chain")
    g.add_argument("--param", type=float, default=0.9, help="stay / forward probability of the preset")
    g.add_argument("--vocab", type=int)
    g.add_argument("--length", type=int, required=True)
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--k", type=int, default=1, help="bracket types (dyck)")
    g.add_argument("--max-depth", type=int, default=4)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="fit a denoiser or an error predictor")
    t.add_argument("target", choices=("denoiser", "predictor"))
    t.add_argument("--data")
    t.add_argument("--vocab", type=int)
    t.add_argument("--chain", help="chain JSON (oracle denoiser, surprisal predictor)")
    t.add_argument("--oracle", action="store_true", help="write an exact Markov-oracle denoiser")
    t.add_argument("--kind", choices=("logistic", "entropy", "surprisal"), default="logistic")
    t.add_argument("--denoiser", help="denoiser checkpoint (predictor training)")
    t.add_argument("--rows", help="denoiser training rows a:b")
    t.add_argument("--train-rows", help="predictor training rows a:b")
    t.add_argument("--val-rows", help="predictor validation rows a:b")
    t.add_argument("--schedule", choices=SCHEDULES, default="linear")
    t.add_argument("--smoothing", type=float, default=1.0)
    t.add_argument("--repeats", type=int, default=1)
    t.add_argument("--tau-diffuse", type=float, default=1.0)
    t.add_argument("--lr", type=float, default=LogisticHyper.lr)
    t.add_argument("--epochs", type=int, default=LogisticHyper.epochs)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--report", help="training-report path (predictor)")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="run a sampler and write samples")
    _sampling_flags(s)
    s.add_argument("--dump-traj", action="store_true")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="score a run directory")
    e.add_argument("run")
    e.add_argument("--chain")
    e.add_argument("--truth", help="ground-truth dataset for infill accuracy")
    e.add_argument("--metrics", default="ppl,div")
    e.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="grid over one parameter")
    _sampling_flags(w)
    w.add_argument("--param", required=True)
    w.add_argument("--values", help="comma-separated grid (default: built-in grid)")
    w.add_argument("--seeds", type=int, default=1)
    w.add_argument("--chain")
    w.add_argument("--metrics", default="ppl,div")
    w.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    w.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the exact-check battery")
    v.add_argument("--sim-runs", type=int, default=200_000)
    v.add_argument("--workers", type=int)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"stardiff: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (StardiffError, ValueError, OSError) as e:
        print(f"stardiff: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
