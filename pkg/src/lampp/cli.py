"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 provider error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import build
from .errors import LamppError, ValidationError
from .fixtures import FIXTURE_KINDS, gen_fixtures
from .lm import LMScorer, ScoreCache, provider_from_env
from .navigation import (
    POLICY_KINDS,
    PolicyConfig,
    load_environment,
    run_batch,
    success_metrics,
)
from .priors import DirichletPrior, LabelVocab, PriorTable, load_table
from .report import ExperimentReport, RunConfig, per_category, report_delta
from .segmentation import (
    SceneModel,
    brute_force_posterior,
    load_scene,
    mc_relabel,
    miou,
    oracle_size,
    ORACLE_LIMIT,
    relabel_scene,
)
from .video import (
    HmmParams,
    TaskDataset,
    bias_transition_holdout,
    fit_map,
    fit_zero_shot,
    parse_transition,
    step_recall,
    transition_recall,
    viterbi_decode,
)

log = logging.getLogger("lampp")


def read_vocab(path, kind: str) -> LabelVocab:
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".json"):
        names = json.loads(text)
    else:
        names = [line.strip() for line in text.splitlines() if line.strip()]
    return LabelVocab(kind, tuple(names))


def _scorer(args) -> LMScorer:
    cache = ScoreCache(args.cache) if getattr(args, "cache", None) else None
    return LMScorer(provider_from_env(args.mock_lm), cache, max_workers=getattr(args, "workers", 4))


def _provider_name(args) -> str:
    return "mock" if getattr(args, "mock_lm", None) else "http"


def _emit(args, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------- priors


def cmd_priors_build(args) -> dict:
    cfg = RunConfig(
        "priors build",
        {"rows": args.rows, "ctx": args.ctx, "mock_lm": args.mock_lm},
        provider=_provider_name(args),
        output=args.out,
        options={"domain": args.domain, "task": args.task, "lambda": args.lam, "cache": args.cache},
    ).validate()
    scorer = _scorer(args)
    d = args.domain
    if d in ("room_object", "nav") and not (args.rows and args.ctx):
        raise ValidationError(f"domain {d} needs --ctx (rooms) and --rows")
    if d in ("confusion", "action") and not args.rows:
        raise ValidationError(f"domain {d} needs --rows")
    if d == "room_object":
        ctx, rows = read_vocab(args.ctx, "room"), read_vocab(args.rows, "object")
        table = build.room_object_prior(scorer, ctx, rows)
    elif d == "confusion":
        ctx = rows = read_vocab(args.rows, "object")
        table = build.confusion_prior(scorer, rows)
    elif d == "nav":
        ctx, rows = read_vocab(args.ctx, "room"), read_vocab(args.rows, "goal")
        table = build.goal_prior_table(scorer, ctx, rows)
    else:
        if not args.task:
            raise ValidationError("domain action needs --task")
        ctx = rows = read_vocab(args.rows, "action")
        table = build.action_prior(scorer, args.task, rows, args.lam)
    _write_json(args.out, table.to_dict())
    metrics = {
        "provider_requests": scorer.requests,
        "completions_scored": scorer.completions_scored,
        "query_budget": build.query_budget(d, ctx.names, rows.names),
    }
    return ExperimentReport(cfg.to_dict(), metrics).to_dict()


# ---------------------------------------------------------------- segmentation


def _load_scene_model(args) -> SceneModel:
    with open(args.priors) as fh:
        doc = json.load(fh)
    if "object_given_room" in doc:
        ogr = PriorTable.from_dict(doc["object_given_room"])
        conf = PriorTable.from_dict(doc["confusion"]) if "confusion" in doc else None
    else:
        ogr, conf = PriorTable.from_dict(doc), None
    if args.confusion:
        conf = load_table(args.confusion)
    if conf is None:
        raise ValidationError("no confusion table: pass --confusion or a bundle with a 'confusion' entry")
    return SceneModel(ogr, conf)


def cmd_segment_relabel(args) -> dict:
    cfg = RunConfig(
        "segment relabel",
        {"scene": args.scene, "priors": args.priors, "confusion": args.confusion, "mock_lm": args.mock_lm},
        provider=_provider_name(args) if args.mc else "none",
        output=args.out,
        options={"mc": args.mc, "oracle": args.oracle},
    ).validate()
    scene = _load_scene_model(args)
    segments, gold = load_scene(args.scene, scene.objects)
    pixels = {s.segment_id: s.pixel_count for s in segments}
    base = {s.segment_id: scene.objects.names[s.dstar] for s in segments}

    result = relabel_scene(scene, segments)
    lampp_labels = dict(zip(result.segment_ids, result.labels))
    diagnostics = {"base_labels": base, "lampp": result.to_dict(scene.objects, scene.rooms)}
    metrics: dict = {"relabeled_segments": sum(base[k] != v for k, v in lampp_labels.items())}
    runs = {"base": base, "lampp": lampp_labels}

    if args.mc:
        scorer = _scorer(args)
        chained = mc_relabel(segments, scene.objects, scene.rooms, scorer)
        runs["mc"] = chained.labels
        diagnostics["mc"] = {"room": chained.room, "replacements": chained.replacements, "labels": chained.labels}
        metrics["mc_provider_requests"] = scorer.requests
    if args.oracle:
        size = oracle_size(scene, len(segments))
        if size <= ORACLE_LIMIT:
            exact = brute_force_posterior(scene, segments)
            diagnostics["oracle"] = exact.to_dict(scene.objects, scene.rooms)
            metrics["oracle_argmax_agreement"] = float(np.mean([a == b for a, b in zip(exact.labels, result.labels)]))
        else:
            diagnostics["oracle"] = f"skipped: {size} configurations exceeds {ORACLE_LIMIT}"
    if gold:
        scores = {name: miou(labels, gold, pixels) for name, labels in runs.items()}
        metrics["miou"] = {name: s.mean for name, s in scores.items()}
        metrics["per_class_iou"] = {name: s.per_class for name, s in scores.items()}
        # gold classes only, so reports on the same scene share a category set
        metrics["per_category"] = {c: scores["lampp"].per_class.get(c, 0.0) for c in sorted(set(gold.values()))}
        for name in runs:
            if name != "base":
                classes = sorted(set(scores[name].per_class) | set(scores["base"].per_class))
                run = {c: scores[name].per_class.get(c, 0.0) for c in classes}
                ref = {c: scores["base"].per_class.get(c, 0.0) for c in classes}
                metrics[f"{name}_vs_base"] = report_delta(run, ref).to_dict()
    return ExperimentReport(cfg.to_dict(), metrics, diagnostics).to_dict()


# ---------------------------------------------------------------- navigation


def cmd_nav_run(args) -> dict:
    cfg = RunConfig(
        "nav run",
        {"env": args.env, "goals": args.goals, "priors": args.priors, "mock_lm": args.mock_lm},
        seed=args.seed,
        provider=_provider_name(args) if args.policy == "mc" else "none",
        output=args.out,
        options={"policy": args.policy, "episodes": args.episodes, "tau": args.tau, "k": args.k},
    ).validate()
    env, detector = load_environment(args.env)
    goals = list(read_vocab(args.goals, "goal").names)
    priors = load_table(args.priors) if args.priors else None
    if priors is not None and not isinstance(priors, PriorTable):
        raise ValidationError("--priors must be a goal prior table")
    if args.policy in ("lampp", "ablation") and priors is None:
        raise ValidationError(f"policy {args.policy} needs --priors")
    policy = PolicyConfig(args.policy, args.tau, args.k, priors if args.policy != "uniform" else None)
    scorer = _scorer(args) if args.policy == "mc" else None
    episodes = run_batch(policy, env, goals, args.episodes, args.seed, detector, scorer)
    m = success_metrics(episodes)
    metrics = {
        **m.to_dict(),
        "per_category": m.per_goal,
        "mean_steps": float(np.mean([e.steps for e in episodes])),
        "lm_queries": sum(e.lm_queries for e in episodes),
    }
    diagnostics = {"episodes": [e.to_dict() for e in episodes], "detector": detector.to_dict()}
    return ExperimentReport(cfg.to_dict(), metrics, diagnostics).to_dict()


# ---------------------------------------------------------------- video


def cmd_video_fit(args) -> dict:
    cfg = RunConfig(
        "video fit",
        {"data": args.data, "prior": args.prior},
        output=args.out,
        options={"lambda": args.lam, "zero_shot": args.zero_shot, "holdout": args.holdout},
    ).validate()
    data = TaskDataset.load(args.data)
    if args.prior:
        prior = load_table(args.prior)
        if not isinstance(prior, DirichletPrior):
            raise ValidationError("--prior must be a Dirichlet prior file")
        if args.lam is not None:
            prior = prior.with_lambda(args.lam)
    else:
        prior = DirichletPrior.flat(data.task, data.actions)
    metrics: dict = {"train_videos": len(data.videos)}
    if args.holdout:
        data = bias_transition_holdout(data, parse_transition(args.holdout))
        metrics["train_videos_after_holdout"] = len(data.videos)
        metrics["prior_only"] = len(data.videos) == 0
    if args.zero_shot:
        frames = [(o, y) for v in data.videos for o, y in zip(v.obs, v.labels)]
        params = fit_zero_shot(data.actions, data.obs_vocab, prior, frames, data.task)
    else:
        params = fit_map(data, prior)
    _write_json(args.params_out, params.to_dict())
    metrics["lambda"] = prior.lam
    return ExperimentReport(cfg.to_dict(), metrics).to_dict()


def cmd_video_decode(args) -> dict:
    cfg = RunConfig("video decode", {"params": args.params, "data": args.data}, output=args.out).validate()
    with open(args.params) as fh:
        params = HmmParams.from_dict(json.load(fh))
    data = TaskDataset.load(args.data)
    preds = {v.video_id: viterbi_decode(params, v.obs) for v in data.videos}
    metrics = {"videos": len(preds), "frames": sum(len(p) for p in preds.values())}
    return ExperimentReport(cfg.to_dict(), metrics, {"predictions": preds}).to_dict()


def cmd_video_eval(args) -> dict:
    cfg = RunConfig(
        "video eval", {"pred": args.pred, "data": args.data}, output=args.out, options={"holdout": args.holdout}
    ).validate()
    with open(args.pred) as fh:
        doc = json.load(fh)
    preds = doc["diagnostics"]["predictions"] if "diagnostics" in doc else doc
    data = TaskDataset.load(args.data)
    gold = {v.video_id: list(v.labels) for v in data.videos}
    rec = step_recall(preds, gold, data.background, {k: data.task for k in gold})
    metrics = {**rec.to_dict(), "per_category": rec.per_action}
    if args.holdout:
        metrics["holdout_transition_recall"] = transition_recall(preds, gold, parse_transition(args.holdout))
    return ExperimentReport(cfg.to_dict(), metrics).to_dict()


# ---------------------------------------------------------------- fixtures / report


def cmd_fixtures_gen(args) -> dict:
    cfg = RunConfig("fixtures gen", seed=args.seed, output=args.out_dir, options={"kind": args.kind}).validate()
    paths = gen_fixtures(args.kind, args.seed, args.out_dir)
    return ExperimentReport(cfg.to_dict(), {"files": len(paths)}, {"written": paths}).to_dict()


def cmd_report_delta(args) -> dict:
    cfg = RunConfig("report delta", {"run": args.run, "baseline": args.baseline}, output=args.out).validate()
    with open(args.run) as fh:
        run = per_category(json.load(fh))
    with open(args.baseline) as fh:
        base = per_category(json.load(fh))
    return ExperimentReport(cfg.to_dict(), report_delta(run, base).to_dict()).to_dict()


# ---------------------------------------------------------------- parser


def _add_lm_flags(p):
    p.add_argument("--mock-lm", metavar="FIXTURE", help="score with a mock LM fixture instead of $LAMPP_LM_URL")
    p.add_argument("--cache", help="JSON-lines score cache")
    p.add_argument("--workers", type=int, default=4, help="concurrent scoring requests")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lampp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="group", required=True)

    priors = sub.add_parser("priors").add_subparsers(dest="verb", required=True)
    p = priors.add_parser("build", help="query the LM grid and write a prior table")
    p.add_argument("--domain", choices=build.DOMAINS, required=True)
    p.add_argument("--rows", help="row vocabulary (objects, goals or actions)")
    p.add_argument("--ctx", help="context vocabulary (rooms)")
    p.add_argument("--task", help="task name for the action domain")
    p.add_argument("--lambda", dest="lam", type=float, default=10.0)
    p.add_argument("--out", required=True, help="prior table output")
    p.add_argument("--report", help="where to write the run report (default stdout)")
    _add_lm_flags(p)
    p.set_defaults(func=cmd_priors_build, report_to="report")

    seg = sub.add_parser("segment").add_subparsers(dest="verb", required=True)
    p = seg.add_parser("relabel", help="relabel a scene's segments")
    p.add_argument("--scene", required=True)
    p.add_argument("--priors", required=True, help="object|room table, or a bundle with a confusion entry")
    p.add_argument("--confusion", help="noisy|true label table")
    p.add_argument("--mc", action="store_true", help="also run the model-chaining baseline")
    p.add_argument("--oracle", action="store_true", help="also run exact enumeration")
    p.add_argument("--out")
    _add_lm_flags(p)
    p.set_defaults(func=cmd_segment_relabel)

    nav = sub.add_parser("nav").add_subparsers(dest="verb", required=True)
    p = nav.add_parser("run", help="simulate navigation episodes")
    p.add_argument("--env", required=True)
    p.add_argument("--policy", choices=POLICY_KINDS, required=True)
    p.add_argument("--goals", required=True)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--priors")
    p.add_argument("--out")
    _add_lm_flags(p)
    p.set_defaults(func=cmd_nav_run)

    video = sub.add_parser("video").add_subparsers(dest="verb", required=True)
    p = video.add_parser("fit", help="fit HMM parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--prior", help="Dirichlet prior file (default: flat)")
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="override the prior strength")
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--holdout", metavar="Y>Y'")
    p.add_argument("--params-out", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_video_fit)
    p = video.add_parser("decode", help="Viterbi-decode a dataset")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_video_decode)
    p = video.add_parser("eval", help="step recall of decoded predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--holdout", metavar="Y>Y'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_video_eval)

    fx = sub.add_parser("fixtures").add_subparsers(dest="verb", required=True)
    p = fx.add_parser("gen", help="write synthetic fixture files")
    p.add_argument("--kind", choices=FIXTURE_KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixtures_gen)

    rep = sub.add_parser("report").add_subparsers(dest="verb", required=True)
    p = rep.add_parser("delta", help="per-category deltas between two reports")
    p.add_argument("--run", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_report_delta)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        payload = args.func(args)
    except LamppError as exc:
        print(f"lampp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"lampp: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"lampp: internal error: {exc}", file=sys.stderr)
        return 4
    payload["wall_clock_s"] = round(time.perf_counter() - start, 6)
    if getattr(args, "report_to", None) == "report":
        args.out = args.report
    _emit(args, payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
