"""Command-line interface.

Subcommands mirror the pipeline stages: gen, render, embed, eval, analyze,
report.  Exit codes: 0 ok, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__, lot, pipeline, quads
from .errors import ConfigError, GeombenchError, StageError
from .render import RasterParams


def _p(message: str) -> None:
    print(message, flush=True)


def _add_gen(sub):
    gen = sub.add_parser("gen", help="generate stimulus manifests")
    kinds = gen.add_subparsers(dest="kind", required=True)

    g = kinds.add_parser("lot", help="stroke-program stimuli + memory trials")
    g.add_argument("--out", required=True)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dmts-trials-per-target", type=int, default=1)
    g.add_argument("--max-depth", type=int, default=lot.MAX_DEPTH_DEFAULT)

    g = kinds.add_parser("quads", help="quadrilateral oddball trials")
    g.add_argument("--out", required=True)
    g.add_argument("--trials-per-class", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", default=",".join(quads.CLASS_ORDER))
    g.add_argument("--delta", type=float, default=0.15)

    g = kinds.add_parser("geoclidean", help="construction-concept trials")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-ref", type=int, default=5)
    g.add_argument("--test-pairs", type=int, default=1)


def _add_render(sub):
    g = sub.add_parser("render", help="rasterize a gen directory to PNGs")
    g.add_argument("--gen", required=True, help="gen output directory")
    g.add_argument("--out", required=True, help="images directory")
    g.add_argument("--width", type=int, default=224)
    g.add_argument("--height", type=int, default=224)
    g.add_argument("--stroke-width", type=float, default=3.0)
    g.add_argument("--supersample", type=int, default=4)
    g.add_argument("--jobs", type=int, default=1)


def _add_embed(sub):
    g = sub.add_parser("embed", help="embed rendered stimuli")
    g.add_argument("--images", required=True)
    g.add_argument("--out", required=True, help=".emb1 or .jsonl output path")
    g.add_argument("--model", default="pixel")
    g.add_argument(
        "--endpoint",
        default=None,
        help=f"provider URL (default: ${pipeline.PROVIDER_ENV})",
    )
    g.add_argument(
        "--pixel", type=int, default=0, metavar="SIDE",
        help="use the local raw-pixel baseline at SIDE x SIDE",
    )
    g.add_argument("--max-batch", type=int, default=64)
    g.add_argument("--timeout", type=float, default=120.0)


def _add_eval(sub):
    ev = sub.add_parser("eval", help="run task evaluations")
    kinds = ev.add_subparsers(dest="kind", required=True)

    g = kinds.add_parser("dmts")
    g.add_argument("--gen", required=True)
    g.add_argument("--embeddings", required=True)
    g.add_argument("--out", required=True, help="metrics CSV path")
    g.add_argument("--model", default="")
    g.add_argument(
        "--human", default=None,
        help="dmts human CSV; metrics then use its trial structure",
    )

    g = kinds.add_parser("oddball")
    g.add_argument("--gen", required=True)
    g.add_argument("--embeddings", required=True)
    g.add_argument("--out", required=True, help="results CSV path")
    g.add_argument("--outlier-rule", choices=("mean", "centroid"), default="mean")
    g.add_argument("--model", default="")

    g = kinds.add_parser("geoclidean")
    g.add_argument("--gen", required=True)
    g.add_argument("--embeddings", required=True)
    g.add_argument("--out", required=True, help="results CSV path")
    g.add_argument("--accuracy-json", default=None)
    g.add_argument("--model", default="")


def _add_analyze(sub):
    an = sub.add_parser("analyze", help="statistical analyses to JSON")
    kinds = an.add_subparsers(dest="kind", required=True)

    g = kinds.add_parser("glm")
    g.add_argument("--human", required=True, help="dmts human-data CSV")
    g.add_argument("--metrics", required=True, help="dmts metrics CSV")
    g.add_argument("--features", required=True, help="stimulus features CSV")
    g.add_argument("--out", required=True)
    g.add_argument("--metric", default="target_distractor_dist")
    g.add_argument("--rt", choices=("choice", "encoding"), default="choice")
    g.add_argument("--rt-transform", choices=("log", "none"), default="log")
    g.add_argument("--confounds", default=",".join(pipeline.DEFAULT_CONFOUNDS))
    g.add_argument("--model", default="")

    g = kinds.add_parser("mixed")
    g.add_argument("--human", required=True)
    g.add_argument("--metrics", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--metric", default="target_distractor_dist")
    g.add_argument("--rt", choices=("choice", "encoding"), default="choice")
    g.add_argument("--rt-transform", choices=("log", "none"), default="log")
    g.add_argument("--model", default="")

    g = kinds.add_parser("decode")
    g.add_argument("--gen", required=True)
    g.add_argument("--embeddings", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--folds", type=int, default=20)
    g.add_argument("--ridge", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--model", default="")

    g = kinds.add_parser("correlate")
    g.add_argument("--metrics", default=None, help="dmts metrics CSV (distance vs complexity)")
    g.add_argument("--results", default=None, help="oddball results CSV (vs human rates)")
    g.add_argument("--human", default=None, help="oddball error-rate CSV")
    g.add_argument("--out", required=True)
    g.add_argument("--model", default="")

    g = kinds.add_parser("slope")
    g.add_argument("--results", required=True, help="oddball results CSV")
    g.add_argument("--out", required=True)
    g.add_argument("--x", choices=("rank", "score"), default="rank")
    g.add_argument("--model", default="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geombench",
        description="geometric-reasoning benchmark harness",
    )
    parser.add_argument("--version", action="version", version=f"geombench {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_render(sub)
    _add_embed(sub)
    _add_eval(sub)
    _add_analyze(sub)
    g = sub.add_parser("report", help="assemble analysis JSONs into markdown")
    g.add_argument("--run", required=True, help="directory holding analysis JSONs")
    g.add_argument("--out", default=None)
    return parser


def _dispatch(args) -> None:
    if args.command == "gen":
        if args.kind == "lot":
            info = pipeline.gen_lot(
                args.out, n=args.n, seed=args.seed,
                cfg=lot.SamplerConfig(max_depth=args.max_depth),
                dmts_trials_per_target=args.dmts_trials_per_target,
            )
        elif args.kind == "quads":
            info = pipeline.gen_quads(
                args.out,
                classes=[c for c in args.classes.split(",") if c],
                trials_per_class=args.trials_per_class,
                seed=args.seed,
                cfg=quads.TrialConfig(delta=args.delta),
            )
        else:
            info = pipeline.gen_geoclidean(
                args.out, seed=args.seed, n_ref=args.n_ref, test_pairs=args.test_pairs
            )
        _p(json.dumps(info, default=str))
    elif args.command == "render":
        params = RasterParams(
            width=args.width, height=args.height,
            stroke_width=args.stroke_width, supersample=args.supersample,
        )
        info = pipeline.render_stimuli(args.gen, args.out, params, jobs=args.jobs)
        _p(json.dumps(info))
    elif args.command == "embed":
        info = pipeline.embed_images(
            args.images, args.out, args.model,
            endpoint_url=args.endpoint, pixel_side=args.pixel,
            max_batch=args.max_batch, timeout=args.timeout,
        )
        _p(json.dumps(info))
    elif args.command == "eval":
        if args.kind == "dmts":
            info = pipeline.eval_dmts(
                args.gen, args.embeddings, args.out, args.model, args.human
            )
        elif args.kind == "oddball":
            info = pipeline.eval_oddball(
                args.gen, args.embeddings, args.out, args.outlier_rule, args.model
            )
        else:
            info = pipeline.eval_geo(args.gen, args.embeddings, args.out, args.model)
            if args.accuracy_json:
                from ._util import canonical_json

                payload = dict(info, analysis="geo_accuracy", model=args.model, version=__version__)
                with open(args.accuracy_json, "w", encoding="utf-8") as fh:
                    fh.write(canonical_json(payload) + "\n")
        _p(json.dumps(info))
    elif args.command == "analyze":
        if args.kind == "glm":
            human = pipeline.load_human_data(args.human, "dmts")
            _p(human.summary())
            confounds = tuple(c for c in args.confounds.split(",") if c)
            info = pipeline.analyze_glm(
                args.human, args.metrics, args.features, args.out,
                metric=args.metric, rt=args.rt, rt_transform=args.rt_transform,
                confounds=confounds, model_tag=args.model,
            )
        elif args.kind == "mixed":
            human = pipeline.load_human_data(args.human, "dmts")
            _p(human.summary())
            info = pipeline.analyze_mixed(
                args.human, args.metrics, args.out,
                metric=args.metric, rt=args.rt, rt_transform=args.rt_transform,
                model_tag=args.model,
            )
        elif args.kind == "decode":
            info = pipeline.analyze_decode(
                args.gen, args.embeddings, args.out,
                folds=args.folds, ridge_lambda=args.ridge,
                seed=args.seed, model_tag=args.model,
            )
        elif args.kind == "correlate":
            if args.metrics:
                info = pipeline.analyze_correlate(args.metrics, args.out, args.model)
            elif args.results and args.human:
                human = pipeline.load_human_data(args.human, "oddball")
                _p(human.summary())
                info = pipeline.analyze_human_correlation(
                    args.results, args.human, args.out, args.model
                )
            else:
                raise ConfigError(
                    "correlate needs --metrics, or --results with --human"
                )
        else:
            info = pipeline.analyze_slope(args.results, args.out, args.x, args.model)
        _p(json.dumps({k: v for k, v in info.items() if k != "classes"}, default=str))
    elif args.command == "report":
        from .report import build_report

        path = build_report(args.run, args.out)
        _p(f"wrote {path}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _dispatch(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except StageError as err:
        print(f"stage failure: {err}", file=sys.stderr)
        return 3
    except GeombenchError as err:
        print(f"stage failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
