"""Command-line entry point wiring the library into reproducible workflows."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, metrics, model, sweeps, training, verify
from .model import CHECKPOINT_VERSION, init_model, load_checkpoint, project, save_checkpoint

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

REPORT_VERSION = 1


class CliError(ValueError):
    """Invalid configuration or input; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _build_parser() -> _Parser:
    p = _Parser(prog="stylealign", description=__doc__)
    p.add_argument(
        "--version",
        action="version",
        version=(
            f"stylealign {__version__} "
            f"(manifest v{data.MANIFEST_VERSION}, checkpoint v{CHECKPOINT_VERSION}, "
            f"report v{REPORT_VERSION}, rules v{verify.RULES_VERSION})"
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic benchmark manifest")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--clusters", type=int, default=32)
    sp.add_argument("--clips-per-cluster", type=int, default=8)
    sp.add_argument("--d-speech", type=int, default=48)
    sp.add_argument("--d-text", type=int, default=40)
    sp.add_argument("--noise-sigma", type=float, default=0.3)
    sp.add_argument("--captions-per-clip", type=int, default=2)

    vp = sub.add_parser("validate", help="validate a manifest and print a report")
    vp.add_argument("--manifest", required=True)
    vp.add_argument("--json", dest="json_out", default=None)

    tp = sub.add_parser("train", help="run the two-stage training pipeline")
    tp.add_argument("--manifest", required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--config", required=True, help="JSON training config")
    tp.add_argument("--seed", type=int, default=None, help="override every seed")
    tp.add_argument("--stages", choices=["1", "2", "both"], default="both")

    for name in ("eval-retrieval", "eval-zeroshot", "eval-correlation", "score"):
        ep = sub.add_parser(name)
        ep.add_argument("--manifest", required=True)
        ep.add_argument("--checkpoint", required=True)
        if name == "eval-retrieval":
            ep.add_argument("--kind", choices=["global", "fine"], default="fine")
            ep.add_argument("--out", default=None)
        elif name == "eval-zeroshot":
            ep.add_argument("--prompts", required=True, help="JSON prompt-set file")
            ep.add_argument("--tag-key", required=True)
            ep.add_argument("--out", default=None)
        elif name == "eval-correlation":
            ep.add_argument("--pairs", required=True, help="JSON [{clip_id, caption_row, mos}]")
            ep.add_argument("--out", default=None)
        else:
            ep.add_argument("--clip-id", required=True)
            ep.add_argument("--caption-row", type=int, required=True)

    fp = sub.add_parser("verify", help="run the caption-verification checklist")
    fp.add_argument("--input", required=True, help="JSONL corpus")
    fp.add_argument("--rules", default=None, help="rule config JSON (default: built-in)")
    fp.add_argument("--out", default=None)
    fp.add_argument("--judge-url", default=None)

    wp = sub.add_parser("sweep", help="run an ablation sweep")
    wp.add_argument("--manifest", required=True)
    wp.add_argument("--spec", required=True, help="JSON sweep spec")
    wp.add_argument("--out", required=True)

    gp = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gp.add_argument("--loss", choices=["stage1", "stage2"], default="stage1")
    gp.add_argument("--lambda", dest="lam", type=float, default=0.5)
    gp.add_argument("--seeds", type=int, default=10)
    gp.add_argument("--h", type=float, default=1e-5)
    gp.add_argument("--batch", type=int, default=6)

    return p


def _load_model_and_data(args):
    dataset = data.load_manifest(args.manifest)
    model = load_checkpoint(
        args.checkpoint,
        expect_dims=(dataset.speech_features.dim, dataset.text_features.dim),
    )
    return model, dataset


def _write_json(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _cmd_synth(args) -> int:
    cfg = data.SyntheticConfig(
        n_clusters=args.clusters,
        clips_per_cluster=args.clips_per_cluster,
        d_s=args.d_speech,
        d_t=args.d_text,
        noise_sigma=args.noise_sigma,
        captions_per_clip=args.captions_per_clip,
    )
    d = data.generate_synthetic(cfg, seed=args.seed)
    data.write_manifest(d, args.out)
    print(f"wrote manifest with {len(d.samples)} clips to {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    report = data.validate_dataset(data.load_manifest(args.manifest))
    _write_json(report.to_dict(), args.json_out)
    return EXIT_OK


_STAGE_KEYS = {
    "steps", "batch_size", "learning_rate", "lr_schedule", "seed", "lam", "scheduler",
}
_MODEL_KEYS = {"d", "hidden", "seed"}


def _stage_cfg(section: dict, name: str, seed_override) -> training.StageCfg:
    unknown = set(section) - _STAGE_KEYS
    if unknown:
        raise CliError(f"unknown keys in {name!r} config: {sorted(unknown)}")
    section = dict(section)
    sched = section.pop("scheduler", None)
    if sched is not None:
        unknown = set(sched) - {"kind", "p0", "p_min", "T"}
        if unknown:
            raise CliError(f"unknown keys in {name}.scheduler: {sorted(unknown)}")
        sched = training.SchedulerCfg(**sched)
    if seed_override is not None:
        section["seed"] = seed_override
    try:
        return training.StageCfg(scheduler=sched, **section)
    except (TypeError, training.TrainingError) as e:
        raise CliError(f"invalid {name!r} config: {e}") from e


def _cmd_train(args) -> int:
    raw = json.loads(Path(args.config).read_text())
    unknown = set(raw) - {"model", "stage1", "stage2"}
    if unknown:
        raise CliError(f"unknown top-level config keys: {sorted(unknown)}")
    model_cfg = raw.get("model", {})
    if set(model_cfg) - _MODEL_KEYS:
        raise CliError(f"unknown keys in 'model' config: {sorted(set(model_cfg) - _MODEL_KEYS)}")

    want1 = args.stages in ("1", "both")
    want2 = args.stages in ("2", "both")
    cfg1 = _stage_cfg(raw["stage1"], "stage1", args.seed) if want1 else None
    cfg2 = _stage_cfg(raw["stage2"], "stage2", args.seed) if want2 else None
    if want2 and (cfg2.scheduler is None):
        raise CliError("stage2 config requires a scheduler")

    dataset = data.load_manifest(args.manifest)
    # fail fast: check eligibility before creating any output
    if want1 and len(dataset.eligible_indices(data.STAGE1)) < cfg1.batch_size:
        raise CliError("not enough stage1-eligible samples for the configured batch size")
    if want2:
        if cfg2.scheduler.p0 > 0 and len(dataset.eligible_indices(data.TASK1)) < cfg2.batch_size:
            raise CliError("not enough task1-eligible samples for the configured batch size")
        if cfg2.scheduler.floor < 1 and len(dataset.eligible_indices(data.TASK2)) < cfg2.batch_size:
            raise CliError("not enough task2-eligible samples for the configured batch size")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else model_cfg.get("seed", 0)
    model = init_model(
        dataset.speech_features.dim,
        dataset.text_features.dim,
        d=model_cfg.get("d", 16),
        hidden=model_cfg.get("hidden"),
        seed=seed,
    )
    resolved = {"model": {**model_cfg, "seed": seed}, "stages": args.stages}
    log: training.TrainLog = []
    opt_state = None
    if want1:
        model, log1, opt_state = training.run_stage1(model, dataset, cfg1)
        log.extend(log1)
        save_checkpoint(model, out / "stage1.ckpt")
        resolved["stage1"] = raw["stage1"] | {"seed": cfg1.seed}
    if want2:
        model, log2, _ = training.run_stage2(model, dataset, cfg2)
        log.extend(log2)
        save_checkpoint(model, out / "stage2.ckpt")
        resolved["stage2"] = raw["stage2"] | {"seed": cfg2.seed}
    training.write_train_log(log, out / "train_log.jsonl")
    (out / "resolved_config.json").write_text(json.dumps(resolved, indent=2, sort_keys=True))
    print(f"trained {len(log)} steps; outputs under {out}")
    return EXIT_OK


def _cmd_eval_retrieval(args) -> int:
    model, dataset = _load_model_and_data(args)
    reports = sweeps.evaluate_retrieval(model, dataset, args.kind)
    _write_json(
        {
            "version": REPORT_VERSION,
            "kind": args.kind,
            "speech_to_text": reports["speech_to_text"].to_dict(),
            "text_to_speech": reports["text_to_speech"].to_dict(),
        },
        args.out,
    )
    return EXIT_OK


def _cmd_eval_zeroshot(args) -> int:
    model, dataset = _load_model_and_data(args)
    spec = json.loads(Path(args.prompts).read_text())
    labels, rows = [], []
    for cls in spec["classes"]:
        for r in cls["prompt_rows"]:
            labels.append(cls["label"])
            rows.append(int(r))
    prompts = project(model.text_head, dataset.text_features.values[rows].astype(np.float64))
    clips = [s for s in dataset.samples if args.tag_key in s.tags]
    if not clips:
        raise CliError(f"no samples carry tag {args.tag_key!r}")
    speech = project(
        model.speech_head,
        dataset.speech_features.values[[s.speech_row for s in clips]].astype(np.float64),
    )
    preds = metrics.zero_shot_classify(speech, prompts, labels)
    golds = [s.tags[args.tag_key] for s in clips]
    report = metrics.accuracy_wa_ua(preds, golds)
    _write_json({"version": REPORT_VERSION, **report.to_dict()}, args.out)
    return EXIT_OK


def _cmd_eval_correlation(args) -> int:
    model, dataset = _load_model_and_data(args)
    pairs = json.loads(Path(args.pairs).read_text())
    by_id = {s.clip_id: s for s in dataset.samples}
    scores, mos = [], []
    for p in pairs:
        sample = by_id.get(p["clip_id"])
        if sample is None:
            raise CliError(f"unknown clip_id {p['clip_id']!r} in pairs file")
        s_emb = project(
            model.speech_head,
            dataset.speech_features.values[[sample.speech_row]].astype(np.float64),
        )[0]
        c_emb = project(
            model.text_head,
            dataset.text_features.values[[int(p["caption_row"])]].astype(np.float64),
        )[0]
        scores.append(metrics.score_pair(s_emb, c_emb))
        mos.append(float(p["mos"]))
    r, rho, tau = metrics.correlations(scores, mos)
    _write_json(
        {"version": REPORT_VERSION, "pearson_r": r, "spearman_rho": rho,
         "kendall_tau_b": tau, "n": len(scores)},
        getattr(args, "out", None),
    )
    return EXIT_OK


def _cmd_score(args) -> int:
    model, dataset = _load_model_and_data(args)
    by_id = {s.clip_id: s for s in dataset.samples}
    sample = by_id.get(args.clip_id)
    if sample is None:
        raise CliError(f"unknown clip_id {args.clip_id!r}")
    if not (0 <= args.caption_row < dataset.text_features.rows):
        raise CliError(f"caption_row {args.caption_row} out of range")
    s_emb = project(
        model.speech_head,
        dataset.speech_features.values[[sample.speech_row]].astype(np.float64),
    )[0]
    c_emb = project(
        model.text_head,
        dataset.text_features.values[[args.caption_row]].astype(np.float64),
    )[0]
    print(f"{metrics.score_pair(s_emb, c_emb):.6f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    rules = verify.compile_rules(args.rules) if args.rules else verify.default_rules()
    records = [
        json.loads(line)
        for line in Path(args.input).read_text().splitlines()
        if line.strip()
    ]
    judge = verify.HttpJudge(args.judge_url) if args.judge_url else None
    results = list(verify.verify_records(records, rules, judge=judge))
    lines = "\n".join(json.dumps(r, sort_keys=True) for r in results)
    if args.out:
        Path(args.out).write_text(lines + "\n")
    else:
        print(lines)
    n_filtered = sum(1 for r in results if r["verdict"] == "filter")
    print(f"# {len(results)} captions, {n_filtered} filtered", file=sys.stderr)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    raw = json.loads(Path(args.spec).read_text())
    axis = raw["axis"]
    if axis == "scheduler":
        values = tuple(training.SchedulerCfg(**v) for v in raw["values"])
    else:
        values = tuple(raw["values"])
    spec = sweeps.SweepSpec(
        axis=axis,
        values=values,
        stage1=_stage_cfg(raw["stage1"], "stage1", None),
        stage2=_stage_cfg(raw["stage2"], "stage2", None),
        model_seed=raw.get("model_seed", 0),
        model_d=raw.get("model_d", 16),
        model_hidden=raw.get("model_hidden"),
        split_seed=raw.get("split_seed", 0),
    )
    dataset = data.load_manifest(args.manifest)
    report = sweeps.run_sweep(spec, dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "sweep_report.json")
    (out / "sweep_report.txt").write_text(report.render_table() + "\n")
    print(report.render_table())
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    if args.h <= 0:
        raise CliError("--h must be positive")
    worst = 0.0
    for seed in range(args.seeds):
        rng = np.random.default_rng([seed, 501])
        d_in_s, d_in_t, hidden, d = 8, 8, 6, 4
        model = init_model(d_in_s, d_in_t, d=d, hidden=hidden, seed=seed)
        # zero biases can leave a fully-rectified row exactly at the origin;
        # jitter them so the check never lands on the normalization eps branch
        for head in (model.speech_head, model.text_head):
            head.b1 += 0.1 * rng.normal(size=head.b1.shape)
            head.b2 += 0.1 * rng.normal(size=head.b2.shape)
        n = args.batch
        speech = rng.normal(size=(n, d_in_s))
        text_a = rng.normal(size=(n, d_in_t))
        if args.loss == "stage1":
            batch = data.Batch(
                task=data.STAGE1, clip_ids=tuple(str(i) for i in range(n)),
                speech=speech, text_a=text_a, text_b=None,
                speech_rows=tuple(range(n)), text_a_rows=tuple(range(n)), text_b_rows=None,
            )
        else:
            text_b = rng.normal(size=(n, d_in_t))
            batch = data.Batch(
                task=data.TASK1, clip_ids=tuple(str(i) for i in range(n)),
                speech=speech, text_a=text_a, text_b=text_b,
                speech_rows=tuple(range(n)), text_a_rows=tuple(range(n)),
                text_b_rows=tuple(range(n)),
            )
        err = training.finite_diff_check(model, batch, h=args.h, lam=args.lam)
        worst = max(worst, err)
    print(f"max relative gradient error over {args.seeds} seeds ({args.loss}): {worst:.3e}")
    return EXIT_OK if worst < 1e-4 else EXIT_RUNTIME


_COMMANDS = {
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "train": _cmd_train,
    "eval-retrieval": _cmd_eval_retrieval,
    "eval-zeroshot": _cmd_eval_zeroshot,
    "eval-correlation": _cmd_eval_correlation,
    "score": _cmd_score,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
}


def dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (CliError, data.DatasetError, training.TrainingError, verify.RuleError,
            sweeps.SweepError, model.ModelError, metrics.MetricError,
            json.JSONDecodeError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # runtime failure
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> int:
    return dispatch()
