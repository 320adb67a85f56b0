"""Pipeline stages: generate, render, embed, evaluate, analyze, report.

Every stage writes artifacts that name the seed, a config hash, and the
harness version; identical configs reproduce identical bytes, regardless
of worker count.  Stage functions raise ConfigError for bad inputs and
StageError for mid-run failures.
"""

from __future__ import annotations

import csv
import json
import math
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, geoclidean, lot, metrics, quads, stats
from ._util import canonical_json, config_hash, derive_seed
from .embeddings import (
    EmbeddingTable,
    ProviderEndpoint,
    fetch_embeddings,
    pixel_table,
    read_table,
    write_table,
)
from .errors import ConfigError, GeombenchError, StageError
from .render import Image, RasterParams, rasterize, save_png, total_ink

PROVIDER_ENV = "GEOMBENCH_PROVIDER"


def _write_run_file(out_dir: Path, task: str, seed: int, config: dict) -> None:
    payload = {
        "task": task,
        "seed": seed,
        "config": config,
        "config_hash": config_hash({"task": task, "seed": seed, "config": config}),
        "version": __version__,
    }
    (out_dir / "run.json").write_text(canonical_json(payload) + "\n", encoding="utf-8")


def _read_run_file(gen_dir: Path) -> dict:
    path = Path(gen_dir) / "run.json"
    if not path.exists():
        raise ConfigError(f"no run.json in {gen_dir} (is it a gen output directory?)")
    return json.loads(path.read_text(encoding="utf-8"))


def _jsonl_write(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":"), sort_keys=True) + "\n")


def _jsonl_read(path: Path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out


# ---------------------------------------------------------------------------
# Generation stages


def gen_lot(
    out_dir,
    n: int = 1000,
    seed: int = 0,
    cfg: lot.SamplerConfig = lot.SamplerConfig(),
    dmts_trials_per_target: int = 1,
) -> dict:
    """Sample programs, write the stimulus manifest and matched memory trials."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    programs = lot.sample_programs(n, seed, cfg)
    records = [
        {"id": f"lot-{i:06d}", "program": p.serialize(), "mdl": m.tokens}
        for i, (p, m) in enumerate(programs)
    ]
    _jsonl_write(out / "manifest.jsonl", records)
    ids = [r["id"] for r in records]
    trials = []
    if dmts_trials_per_target > 0 and n >= 6:
        rng = random.Random(derive_seed(seed, "dmts"))
        t = 0
        for rep in range(dmts_trials_per_target):
            for target in ids:
                pool = [s for s in ids if s != target]
                distractors = rng.sample(pool, 5)
                # choice-grid layout is fixed here, not by the client
                target_slot = rng.randrange(6)
                slots = distractors[:]
                slots.insert(target_slot, target)
                trials.append(
                    {
                        "trial_id": f"dmts-{t:06d}",
                        "target": target,
                        "distractors": distractors,
                        "slots": slots,
                        "target_slot": target_slot,
                    }
                )
                t += 1
        _jsonl_write(out / "dmts_trials.jsonl", trials)
    _write_run_file(
        out, "lot", seed,
        {"n": n, "sampler": cfg.as_dict(), "dmts_trials_per_target": dmts_trials_per_target},
    )
    return {"stimuli": len(records), "trials": len(trials)}


def gen_quads(
    out_dir,
    classes=quads.CLASS_ORDER,
    trials_per_class: int = 10,
    seed: int = 0,
    cfg: quads.TrialConfig = quads.TrialConfig(),
) -> dict:
    """Build oddball trials; write the trial manifest and per-slot stimuli."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resamples = []
    trials = quads.build_trials(
        list(classes), trials_per_class, seed, cfg,
        on_resample=lambda c, t, a: resamples.append((c, t, a)),
    )
    trial_records = []
    stim_records = []
    for tr in trials:
        trial_records.append(
            {
                "trial_id": tr.trial_id,
                "class": tr.class_label,
                "slots": [
                    {"stim": s.stim_id, "rot": s.rotation, "scale": s.scale}
                    for s in tr.slots
                ],
                "oddball_slot": tr.oddball_slot,
                "displacement": [float(tr.displacement[0]), float(tr.displacement[1])],
            }
        )
        for s in tr.slots:
            stim_records.append(
                {"id": s.stim_id, "vertices": [[float(x), float(y)] for x, y in s.vertices]}
            )
    _jsonl_write(out / "trials.jsonl", trial_records)
    _jsonl_write(out / "stimuli.jsonl", stim_records)
    _write_run_file(
        out, "quads", seed,
        {
            "classes": list(classes),
            "trials_per_class": trials_per_class,
            "trial_cfg": cfg.as_dict(),
            "resampled_trials": len(resamples),
        },
    )
    return {"trials": len(trials), "stimuli": len(stim_records), "resamples": len(resamples)}


def gen_geoclidean(
    out_dir,
    seed: int = 0,
    n_ref: int = 5,
    test_pairs: int = 1,
    canvas: geoclidean.CanvasConfig = geoclidean.CanvasConfig(),
    rho_min: float = geoclidean.RHO_MIN_DEFAULT,
    rho_max: float = geoclidean.RHO_MAX_DEFAULT,
) -> dict:
    """Realize the bundled corpus into references, tests and negatives."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = geoclidean.load_corpus()
    trials, scenes, skipped = geoclidean.build_geo_trials(
        corpus, n_ref=n_ref, seed=seed, canvas=canvas,
        rho_min=rho_min, rho_max=rho_max, test_pairs=test_pairs,
    )
    trial_records = [
        {
            "concept_id": t.concept_id,
            "refs": list(t.reference_ids),
            "test": t.test_id,
            "label": t.label,
            "condition": t.condition,
        }
        for t in trials
    ]
    stim_records = []
    for sid in sorted(scenes):
        strokes = scenes[sid].render_strokes()
        stim_records.append(
            {
                "id": sid,
                "strokes": [[[float(x), float(y)] for x, y in s] for s in strokes],
            }
        )
    _jsonl_write(out / "trials.jsonl", trial_records)
    _jsonl_write(out / "stimuli.jsonl", stim_records)
    _write_run_file(
        out, "geoclidean", seed,
        {
            "n_ref": n_ref,
            "test_pairs": test_pairs,
            "canvas_size": canvas.size,
            "rho_min": rho_min,
            "rho_max": rho_max,
            "skipped": [list(s) for s in skipped],
        },
    )
    return {"trials": len(trials), "stimuli": len(stim_records), "skipped": skipped}


# ---------------------------------------------------------------------------
# Rendering stage


def _lot_features(program_text: str, img: Image, trace) -> dict:
    def draws(node):
        if isinstance(node, (lot.Line, lot.Arc)):
            return 1
        if isinstance(node, lot.Turn):
            return 0
        if isinstance(node, lot.Concat):
            return draws(node.left) + draws(node.right)
        if isinstance(node, lot.Repeat):
            return node.count * draws(node.body)
        raise TypeError(type(node).__name__)

    pts = np.vstack(trace.strokes)
    span = pts.max(axis=0) - pts.min(axis=0)
    big = max(span[0], span[1])
    aspect = float(min(span[0], span[1]) / big) if big > 0 else 0.0
    program = lot.parse_program(program_text)
    return {
        "n_draw": draws(program.root),
        "ink_area": total_ink(img) / 255.0,
        "aspect": aspect,
    }


def _render_one(task: str, rec: dict, params: RasterParams, canvas_size: float):
    if task == "lot":
        trace = lot.execute(lot.parse_program(rec["program"]))
        img = rasterize(trace, params)
        return img, _lot_features(rec["program"], img, trace)
    if task == "quads":
        verts = np.asarray(rec["vertices"], dtype=np.float64)
        closed = np.vstack([verts, verts[:1]])
        return rasterize([closed], params), None
    if task == "geoclidean":
        scale = params.width / canvas_size
        strokes = [np.asarray(s, dtype=np.float64) * scale for s in rec["strokes"]]
        return rasterize(strokes, params, fit=False), None
    raise ConfigError(f"unknown task {task!r}")


def render_stimuli(gen_dir, images_dir, params: RasterParams = RasterParams(), jobs: int = 1) -> dict:
    """Rasterize every stimulus in a gen directory to <id>.png.

    Output bytes are identical for any ``jobs`` value; workers only
    parallelize independent stimuli and files are written in manifest order.
    """
    gen_dir = Path(gen_dir)
    run = _read_run_file(gen_dir)
    task = run["task"]
    canvas_size = float(run["config"].get("canvas_size", 1.0))
    if task == "lot":
        records = _jsonl_read(gen_dir / "manifest.jsonl")
    else:
        records = _jsonl_read(gen_dir / "stimuli.jsonl")
    out = Path(images_dir)
    out.mkdir(parents=True, exist_ok=True)
    features = {}

    def work(rec):
        try:
            return rec["id"], _render_one(task, rec, params, canvas_size)
        except GeombenchError as err:
            raise StageError(f"render failed for {rec['id']}: {err}") from None

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, records, chunksize=16))
    else:
        results = [work(rec) for rec in records]
    for sid, (img, feats) in results:
        save_png(img, out / f"{sid.replace('/', '__')}.png")
        if feats is not None:
            features[sid] = feats
    if task == "lot":
        with open(gen_dir / "features.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "n_draw", "ink_area", "aspect"])
            for rec in records:
                f = features[rec["id"]]
                writer.writerow(
                    [rec["id"], f["n_draw"], f"{f['ink_area']:.6f}", f"{f['aspect']:.9f}"]
                )
    meta = {
        "task": task,
        "raster": params.as_dict(),
        "count": len(records),
        "version": __version__,
    }
    (out / "render.json").write_text(canonical_json(meta) + "\n", encoding="utf-8")
    return {"rendered": len(records)}


def _image_id_from_path(path: Path) -> str:
    return path.stem.replace("__", "/")


def load_images(images_dir) -> dict:
    """id -> PNG bytes for every stimulus image in a directory, sorted by id."""
    images = {}
    for path in sorted(Path(images_dir).glob("*.png")):
        images[_image_id_from_path(path)] = path.read_bytes()
    if not images:
        raise ConfigError(f"no PNGs found in {images_dir}")
    return images


# ---------------------------------------------------------------------------
# Embedding stage


def embed_images(
    images_dir,
    out_path,
    model_tag: str,
    endpoint_url: str | None = None,
    pixel_side: int = 0,
    max_batch: int = 64,
    timeout: float = 120.0,
) -> dict:
    """Embed rendered stimuli via the provider protocol or the pixel baseline."""
    images = load_images(images_dir)
    if pixel_side:
        from .render import decode_png

        table = pixel_table(
            {sid: decode_png(png) for sid, png in images.items()}, side=pixel_side
        )
    else:
        url = endpoint_url or os.environ.get(PROVIDER_ENV, "")
        if not url:
            raise ConfigError(
                f"no provider endpoint: pass --endpoint or set {PROVIDER_ENV}"
            )
        endpoint = ProviderEndpoint(url, timeout=timeout, max_batch=max_batch)
        table = fetch_embeddings(endpoint, model_tag, sorted(images.items()))
    out_path = Path(out_path)
    fmt = "jsonl" if out_path.suffix == ".jsonl" else "emb1"
    write_table(table, fmt, out_path)
    return {"embedded": len(table), "dim": table.dim, "format": fmt}


def _table_variance(table: EmbeddingTable) -> float:
    if len(table) < 2:
        return 0.0
    m = table.matrix().astype(np.float64)
    return float(m.var(axis=0).mean())


# ---------------------------------------------------------------------------
# Evaluation stages


def eval_dmts(gen_dir, table_path, out_csv, model_tag: str = "", human_csv=None) -> dict:
    """Per-target distance metrics; aggregates over that target's trials.

    With ``human_csv`` the trial structure (target + distractors) comes from
    the human dataset, so metrics are computed on exactly the trials people
    saw; otherwise the generated dmts_trials.jsonl is used.
    """
    gen_dir = Path(gen_dir)
    manifest = _jsonl_read(gen_dir / "manifest.jsonl")
    if human_csv:
        human = load_human_data(human_csv, "dmts")
        trials = [
            {"target": r.target, "distractors": list(r.distractors)}
            for r in human.rows
        ]
    else:
        trials_path = gen_dir / "dmts_trials.jsonl"
        if not trials_path.exists():
            raise ConfigError(f"no dmts_trials.jsonl in {gen_dir}")
        trials = _jsonl_read(trials_path)
    table = read_table(table_path, model_tag)
    degenerate = _table_variance(table) < 1e-12
    mdl_by_id = {r["id"]: r["mdl"] for r in manifest}
    vectors = {}
    for r in manifest:
        if r["id"] not in table.entries:
            raise StageError(f"missing embedding for stimulus {r['id']!r}")
        vectors[r["id"]] = table.entries[r["id"]].astype(np.float64)
    centroid = np.mean(list(vectors.values()), axis=0)
    dist_sums: dict = {}
    for tr in trials:
        t = vectors[tr["target"]]
        d = np.stack([vectors[s] for s in tr["distractors"]])
        m = metrics.dmts_metrics(t, d, centroid, target_id=tr["target"])
        n, acc = dist_sums.get(tr["target"], (0, 0.0))
        dist_sums[tr["target"]] = (n + 1, acc + m.target_distractor_dist)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target_id", "mdl", "target_distractor_dist", "target_centroid_dist"])
        for r in manifest:
            sid = r["id"]
            if sid not in dist_sums:
                continue
            n, acc = dist_sums[sid]
            tcd = float(np.linalg.norm(vectors[sid] - centroid))
            writer.writerow([sid, r["mdl"], f"{acc / n:.9g}", f"{tcd:.9g}"])
    return {"targets": len(dist_sums), "degenerate_embeddings": degenerate}


def eval_oddball(gen_dir, table_path, out_csv, rule: str = "mean", model_tag: str = "") -> dict:
    """Predict the outlier slot per trial and write the results table."""
    gen_dir = Path(gen_dir)
    trials = _jsonl_read(gen_dir / "trials.jsonl")
    table = read_table(table_path, model_tag)
    rows = []
    correct = 0
    for tr in trials:
        ids = [s["stim"] for s in tr["slots"]]
        try:
            vectors = table.matrix(ids)
        except KeyError as err:
            raise StageError(f"trial {tr['trial_id']}: {err}") from None
        pred = metrics.oddball_predict(vectors, rule=rule)
        ok = pred == tr["oddball_slot"]
        correct += ok
        rows.append([tr["trial_id"], tr["class"], pred, tr["oddball_slot"], int(ok)])
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "class", "predicted_slot", "oddball_slot", "correct"])
        writer.writerows(rows)
    return {"trials": len(rows), "accuracy": correct / max(1, len(rows)), "rule": rule}


def eval_geo(gen_dir, table_path, out_csv, model_tag: str = "") -> dict:
    """Score matched positive/negative pairs and write per-pair results."""
    gen_dir = Path(gen_dir)
    recs = _jsonl_read(gen_dir / "trials.jsonl")
    trials = [
        geoclidean.GeoTrial(
            r["concept_id"], tuple(r["refs"]), r["test"], r["label"], r["condition"]
        )
        for r in recs
    ]
    table = read_table(table_path, model_tag)
    try:
        acc = metrics.geo_accuracy(trials, table)
    except metrics.MetricError as err:
        raise StageError(str(err)) from None
    # re-derive per-pair rows for the CSV
    by_concept: dict = {}
    for t in trials:
        d = by_concept.setdefault(t.concept_id, {"refs": t.reference_ids, "pos": [], "neg": {}})
        if t.label == "positive":
            d["pos"].append(t.test_id)
        else:
            d["neg"].setdefault(t.condition, []).append(t.test_id)
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["concept_id", "condition", "correct"])
        for cid in sorted(by_concept):
            d = by_concept[cid]
            proto = table.matrix(d["refs"]).astype(np.float64).mean(axis=0)
            positives = sorted(d["pos"])
            k = 0
            for cond in ("close", "far"):
                for neg_id in sorted(d["neg"].get(cond, [])):
                    pos_id = positives[k]
                    k += 1
                    dp = float(np.linalg.norm(table.entries[pos_id].astype(np.float64) - proto))
                    dn = float(np.linalg.norm(table.entries[neg_id].astype(np.float64) - proto))
                    writer.writerow([cid, cond, int(dp < dn)])
    return {
        "overall": acc.overall,
        "close": acc.close,
        "far": acc.far,
        "n_pairs": acc.n_pairs,
    }


# ---------------------------------------------------------------------------
# Human data


@dataclass
class DmtsTrialRow:
    subject: str
    trial: int
    target: str
    distractors: tuple
    encoding_rt_ms: float
    choice_rt_ms: float
    correct: bool


@dataclass
class OddballRateRow:
    class_label: str
    group: str
    error_rate: float


@dataclass
class HumanDataset:
    kind: str  # dmts | oddball
    rows: list

    def summary(self) -> str:
        if self.kind == "dmts":
            subjects = {r.subject for r in self.rows}
            err = 1.0 - float(np.mean([r.correct for r in self.rows])) if self.rows else 0.0
            return (
                f"dmts: {len(subjects)} subjects, {len(self.rows)} trials, "
                f"mean error {100 * err:.2f}%"
            )
        rates = [r.error_rate for r in self.rows]
        return (
            f"oddball: {len(self.rows)} rows, "
            f"groups {sorted({r.group for r in self.rows})}, "
            f"mean error {100 * float(np.mean(rates)):.2f}%"
        )


def load_human_data(path, kind: str) -> HumanDataset:
    """Load and validate a human-data CSV (schemas in the README)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if kind == "dmts":
            required = {
                "subject", "trial", "target", "distractors",
                "encoding_rt_ms", "choice_rt_ms", "correct",
            }
            if not required.issubset(reader.fieldnames or ()):
                raise ConfigError(
                    f"dmts CSV must have columns {sorted(required)}, "
                    f"got {reader.fieldnames}"
                )
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                try:
                    enc = float(rec["encoding_rt_ms"])
                    cho = float(rec["choice_rt_ms"])
                except ValueError:
                    raise ConfigError(f"line {lineno}: non-numeric reaction time") from None
                if enc <= 0 or cho <= 0:
                    raise ConfigError(f"line {lineno}: reaction times must be > 0")
                distractors = tuple(d for d in rec["distractors"].split(";") if d)
                if len(distractors) != 5:
                    raise ConfigError(f"line {lineno}: expected 5 distractors")
                correct = rec["correct"].strip().lower()
                if correct not in ("0", "1", "true", "false"):
                    raise ConfigError(f"line {lineno}: correct must be 0/1/true/false")
                rows.append(
                    DmtsTrialRow(
                        subject=rec["subject"],
                        trial=int(rec["trial"]),
                        target=rec["target"],
                        distractors=distractors,
                        encoding_rt_ms=enc,
                        choice_rt_ms=cho,
                        correct=correct in ("1", "true"),
                    )
                )
            return HumanDataset("dmts", rows)
        if kind == "oddball":
            required = {"class", "group", "error_rate"}
            if not required.issubset(reader.fieldnames or ()):
                raise ConfigError(
                    f"oddball CSV must have columns {sorted(required)}, "
                    f"got {reader.fieldnames}"
                )
            rows = []
            for lineno, rec in enumerate(reader, start=2):
                group = rec["group"].strip()
                if group not in ("human", "baboon"):
                    raise ConfigError(f"line {lineno}: group must be human or baboon")
                try:
                    rate = float(rec["error_rate"])
                except ValueError:
                    raise ConfigError(f"line {lineno}: non-numeric error rate") from None
                if not (0.0 <= rate <= 1.0):
                    raise ConfigError(f"line {lineno}: error rate outside [0, 1]")
                rows.append(OddballRateRow(rec["class"], group, rate))
            return HumanDataset("oddball", rows)
    raise ConfigError(f"unknown human-data kind {kind!r} (want dmts or oddball)")


# ---------------------------------------------------------------------------
# Analysis stages (JSON out)


def _read_metrics_csv(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["target_id"]] = {
                "mdl": float(rec["mdl"]),
                "target_distractor_dist": float(rec["target_distractor_dist"]),
                "target_centroid_dist": float(rec["target_centroid_dist"]),
            }
    return out


def _read_features_csv(path) -> dict:
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out[rec["id"]] = {
                "n_draw": float(rec["n_draw"]),
                "ink_area": float(rec["ink_area"]),
                "aspect": float(rec["aspect"]),
            }
    return out


DEFAULT_CONFOUNDS = ("n_draw", "ink_area", "aspect")


def _assemble_dmts_design(
    human: HumanDataset, metric_by_target: dict, features: dict,
    metric: str, rt: str, confound_names,
):
    """Per-trial rows of (rt, metric value, confounds) for targets with data."""
    rows = []
    for r in human.rows:
        if r.target not in metric_by_target:
            continue
        if metric == "mdl":
            value = metric_by_target[r.target]["mdl"]
        else:
            value = metric_by_target[r.target][metric]
        conf = [features[r.target][c] for c in confound_names] if confound_names else []
        rt_val = r.choice_rt_ms if rt == "choice" else r.encoding_rt_ms
        rows.append((r.target, rt_val, value, conf))
    if not rows:
        raise StageError("no overlap between human data targets and metrics")
    return rows


def analyze_glm(
    human_csv, metrics_csv, features_csv, out_json,
    metric: str = "target_distractor_dist",
    rt: str = "choice",
    rt_transform: str = "log",
    confounds=DEFAULT_CONFOUNDS,
    model_tag: str = "",
) -> dict:
    """Stimulus-level GLM: mean RT per target ~ metric + confounds."""
    human = load_human_data(human_csv, "dmts")
    metric_by_target = _read_metrics_csv(metrics_csv)
    features = _read_features_csv(features_csv) if confounds else {}
    rows = _assemble_dmts_design(human, metric_by_target, features, metric, rt, confounds)
    by_target: dict = {}
    for target, rt_val, value, conf in rows:
        by_target.setdefault(target, {"rts": [], "value": value, "conf": conf})
        by_target[target]["rts"].append(rt_val)
    targets = sorted(by_target)
    y = np.array([float(np.mean(by_target[t]["rts"])) for t in targets])
    if rt_transform == "log":
        y = np.log(y)
    elif rt_transform != "none":
        raise ConfigError("rt_transform must be log or none")
    X = np.array([[by_target[t]["value"]] for t in targets])
    C = np.array([by_target[t]["conf"] for t in targets]) if confounds else None
    try:
        result = stats.glm_fit(
            X, y, confounds=C, names=[metric], confound_names=list(confounds or ()),
        )
    except stats.StatsError as err:
        raise StageError(f"GLM failed: {err}") from None
    report = {
        "analysis": "glm",
        "model": model_tag,
        "metric": metric,
        "rt": rt,
        "rt_transform": rt_transform,
        "confounds": list(confounds or ()),
        "n": result.n,
        "r2": result.r2,
        "adj_r2": result.adj_r2,
        "predictor_p": result.by_name(metric)["p"],
        "coefficients": result.as_dict()["columns"],
        "version": __version__,
    }
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def analyze_mixed(
    human_csv, metrics_csv, out_json,
    metric: str = "target_distractor_dist",
    rt: str = "choice",
    rt_transform: str = "log",
    model_tag: str = "",
) -> dict:
    """Trial-level random-intercept model grouped by target stimulus."""
    human = load_human_data(human_csv, "dmts")
    metric_by_target = _read_metrics_csv(metrics_csv)
    rows = _assemble_dmts_design(human, metric_by_target, {}, metric, rt, ())
    y = np.array([r[1] for r in rows])
    if rt_transform == "log":
        y = np.log(y)
    elif rt_transform != "none":
        raise ConfigError("rt_transform must be log or none")
    X = np.array([[r[2]] for r in rows])
    groups = np.array([r[0] for r in rows])
    try:
        result = stats.lmm_fit(X, y, groups, names=[metric])
    except stats.StatsError as err:
        raise StageError(f"mixed model failed: {err}") from None
    report = {
        "analysis": "mixed",
        "model": model_tag,
        "metric": metric,
        "rt": rt,
        "rt_transform": rt_transform,
        "n": result.n,
        "n_groups": result.n_groups,
        "predictor_p": result.by_name(metric)["p"],
        "coef": result.by_name(metric)["coef"],
        "sigma_b2": result.sigma_b2,
        "sigma_e2": result.sigma_e2,
        "marginal_r2": result.marginal_r2,
        "conditional_r2": result.conditional_r2,
        "version": __version__,
    }
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def analyze_decode(
    gen_dir, table_path, out_json,
    folds: int = 20, ridge_lambda=None, seed: int = 0, model_tag: str = "",
) -> dict:
    """Cross-validated decoding of program complexity from embeddings."""
    manifest = _jsonl_read(Path(gen_dir) / "manifest.jsonl")
    table = read_table(table_path, model_tag)
    ids = [r["id"] for r in manifest]
    try:
        X = table.matrix(ids).astype(np.float64)
    except KeyError as err:
        raise StageError(str(err)) from None
    y = np.array([float(r["mdl"]) for r in manifest])
    degenerate = _table_variance(table) < 1e-12
    try:
        result = stats.cv_decode(X, y, folds=folds, ridge_lambda=ridge_lambda, seed=seed)
    except stats.StatsError as err:
        raise StageError(f"decode failed: {err}") from None
    report = {
        "analysis": "decode",
        "model": model_tag or table.model_tag,
        "n": len(ids),
        "dim": table.dim,
        "folds": result.folds,
        "r2": result.r2,
        "ridge_lambda": list(result.ridge_lambda),
        "fold_seed": result.seed,
        "degenerate_embeddings": degenerate,
        "version": __version__,
    }
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def analyze_correlate(metrics_csv, out_json, model_tag: str = "") -> dict:
    """Pearson correlation of target-centroid distance with complexity.

    Degenerate (zero-variance) metrics produce a null result with a warning
    flag rather than a failure, so constant-embedding runs still complete.
    """
    rows = _read_metrics_csv(metrics_csv)
    mdl = [v["mdl"] for v in rows.values()]
    dist = [v["target_centroid_dist"] for v in rows.values()]
    report = {
        "analysis": "correlate",
        "model": model_tag,
        "x": "target_centroid_dist",
        "y": "mdl",
        "n": len(mdl),
        "version": __version__,
    }
    try:
        result = stats.pearson(dist, mdl)
        report.update({"r": result.r, "p": result.p, "n": result.n, "degenerate": False})
    except stats.StatsError as err:
        report.update({"r": None, "p": None, "degenerate": True, "warning": str(err)})
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def _curve_from_results(results_csv) -> metrics.ErrorCurve:
    trials = []
    preds = {}

    class Row:
        def __init__(self, trial_id, class_label, oddball_slot):
            self.trial_id = trial_id
            self.class_label = class_label
            self.oddball_slot = oddball_slot

    with open(results_csv, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            trials.append(Row(rec["trial_id"], rec["class"], int(rec["oddball_slot"])))
            preds[rec["trial_id"]] = int(rec["predicted_slot"])
    return metrics.error_curve(trials, preds, quads.CLASS_SCORES)


def analyze_slope(
    results_csv, out_json, x_kind: str = "rank", model_tag: str = ""
) -> dict:
    """Slope of error rate against regularity (rank 0 = most regular)."""
    curve = _curve_from_results(results_csv)
    rates = curve.rates()
    if x_kind == "rank":
        x = np.arange(len(rates), dtype=float)
    elif x_kind == "score":
        x = -curve.scores()  # descending regularity means increasing x
    else:
        raise ConfigError("x_kind must be rank or score")
    try:
        result = stats.slope_test(x, rates)
    except stats.StatsError as err:
        raise StageError(f"slope test failed: {err}") from None
    report = {
        "analysis": "slope",
        "model": model_tag,
        "x_kind": x_kind,
        "slope": float(result.coef[1]),
        "p": float(result.p_values[1]),
        "r2": result.r2,
        "classes": [
            {
                "class": e.class_label,
                "error_rate": e.error_rate,
                "n": e.n_trials,
                "score": e.regularity_score,
            }
            for e in curve.entries
        ],
        "version": __version__,
    }
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def analyze_human_correlation(results_csv, human_csv, out_json, model_tag: str = "") -> dict:
    """Correlate model per-class error rates with human/baboon rates."""
    curve = _curve_from_results(results_csv)
    human = load_human_data(human_csv, "oddball")
    by_group: dict = {}
    for row in human.rows:
        by_group.setdefault(row.group, {})[row.class_label] = row.error_rate
    model_rates = {e.class_label: e.error_rate for e in curve.entries}
    report = {
        "analysis": "human_correlation",
        "model": model_tag,
        "groups": {},
        "version": __version__,
    }
    for group in sorted(by_group):
        shared = sorted(set(by_group[group]) & set(model_rates))
        if len(shared) < 3:
            continue
        res = stats.pearson(
            [model_rates[c] for c in shared], [by_group[group][c] for c in shared]
        )
        report["groups"][group] = {"r": res.r, "p": res.p, "n": res.n}
    Path(out_json).write_text(canonical_json(report) + "\n", encoding="utf-8")
    return report


def reference_rates_path() -> Path:
    """Bundled illustrative human/baboon error-rate table (synthetic shape)."""
    from importlib import resources

    return Path(str(resources.files("geombench") / "data" / "reference_error_rates.csv"))


# ---------------------------------------------------------------------------
# End-to-end pipeline


@dataclass
class RunConfig:
    """One reproducible pipeline run."""

    task: str  # lot-dmts | quad-oddball | geoclidean
    out_dir: str
    seed: int = 0
    model_tag: str = "pixel"
    endpoint: str | None = None
    pixel_side: int = 32
    table_path: str | None = None  # pre-computed embeddings; skips the embed stage
    human_csv: str | None = None
    n_stimuli: int = 200
    trials_per_class: int = 20
    n_ref: int = 5
    test_pairs: int = 1
    raster: RasterParams = field(default_factory=RasterParams)
    jobs: int = 1
    outlier_rule: str = "mean"

    def as_dict(self) -> dict:
        d = {
            "task": self.task,
            "seed": self.seed,
            "model_tag": self.model_tag,
            "pixel_side": self.pixel_side,
            "n_stimuli": self.n_stimuli,
            "trials_per_class": self.trials_per_class,
            "n_ref": self.n_ref,
            "test_pairs": self.test_pairs,
            "raster": self.raster.as_dict(),
            "outlier_rule": self.outlier_rule,
        }
        return d


def run_pipeline(cfg: RunConfig) -> dict:
    """Generate, render, embed, evaluate, analyze, and report one task.

    Halts with StageError naming the failing stage; a pipeline.json manifest
    records completed stages and artifact paths either way.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    done: list = []
    artifacts: dict = {}

    def finish_manifest():
        payload = {
            "config": cfg.as_dict(),
            "config_hash": config_hash(cfg.as_dict()),
            "stages_completed": done,
            "artifacts": artifacts,
            "version": __version__,
        }
        (out / "pipeline.json").write_text(canonical_json(payload) + "\n", encoding="utf-8")

    def stage(name, fn, *args, **kwargs):
        try:
            result = fn(*args, **kwargs)
        except GeombenchError as err:
            finish_manifest()
            raise StageError(f"stage {name!r} failed: {err}") from None
        done.append(name)
        return result

    gen_dir = out / "gen"
    images_dir = out / "images"
    table_path = Path(cfg.table_path) if cfg.table_path else out / "embeddings.emb1"
    artifacts["gen"] = str(gen_dir)
    artifacts["images"] = str(images_dir)
    artifacts["embeddings"] = str(table_path)

    if cfg.task == "lot-dmts":
        stage("gen", gen_lot, gen_dir, n=cfg.n_stimuli, seed=cfg.seed)
        stage("render", render_stimuli, gen_dir, images_dir, cfg.raster, cfg.jobs)
        if not cfg.table_path:
            stage(
                "embed", embed_images, images_dir, table_path, cfg.model_tag,
                endpoint_url=cfg.endpoint,
                pixel_side=cfg.pixel_side if not cfg.endpoint else 0,
            )
        metrics_csv = out / "dmts_metrics.csv"
        info = stage(
            "eval", eval_dmts, gen_dir, table_path, metrics_csv,
            cfg.model_tag, cfg.human_csv,
        )
        artifacts["metrics_csv"] = str(metrics_csv)
        stage(
            "analyze-decode", analyze_decode, gen_dir, table_path,
            out / "decode.json", min(20, cfg.n_stimuli), None, cfg.seed, cfg.model_tag,
        )

        def write_pca():
            from .report import pca_scatter_svg

            svg = pca_scatter_svg(table_path, gen_dir / "manifest.jsonl")
            (out / "embedding_pca.svg").write_text(svg, encoding="utf-8")
            return {}

        stage("plot-pca", write_pca)
        stage("analyze-correlate", analyze_correlate, metrics_csv, out / "correlate.json", cfg.model_tag)
        if cfg.human_csv:
            for rt, metric in (("choice", "target_distractor_dist"), ("encoding", "target_centroid_dist")):
                stage(
                    f"analyze-glm-{rt}", analyze_glm, cfg.human_csv, metrics_csv,
                    gen_dir / "features.csv", out / f"glm_{rt}.json",
                    metric, rt, "log", DEFAULT_CONFOUNDS, cfg.model_tag,
                )
                stage(
                    f"analyze-mixed-{rt}", analyze_mixed, cfg.human_csv, metrics_csv,
                    out / f"mixed_{rt}.json", metric, rt, "log", cfg.model_tag,
                )
        if info.get("degenerate_embeddings"):
            artifacts["warning"] = "degenerate embeddings: table variance ~ 0"
    elif cfg.task == "quad-oddball":
        stage(
            "gen", gen_quads, gen_dir,
            trials_per_class=cfg.trials_per_class, seed=cfg.seed,
        )
        stage("render", render_stimuli, gen_dir, images_dir, cfg.raster, cfg.jobs)
        if not cfg.table_path:
            stage(
                "embed", embed_images, images_dir, table_path, cfg.model_tag,
                endpoint_url=cfg.endpoint,
                pixel_side=cfg.pixel_side if not cfg.endpoint else 0,
            )
        results_csv = out / "oddball_results.csv"
        stage("eval", eval_oddball, gen_dir, table_path, results_csv, cfg.outlier_rule, cfg.model_tag)
        artifacts["results_csv"] = str(results_csv)
        stage("analyze-slope", analyze_slope, results_csv, out / "slope.json", "rank", cfg.model_tag)
        human_csv = cfg.human_csv or str(reference_rates_path())
        stage(
            "analyze-humancorr", analyze_human_correlation, results_csv, human_csv,
            out / "human_correlation.json", cfg.model_tag,
        )
    elif cfg.task == "geoclidean":
        stage(
            "gen", gen_geoclidean, gen_dir, seed=cfg.seed,
            n_ref=cfg.n_ref, test_pairs=cfg.test_pairs,
        )
        stage("render", render_stimuli, gen_dir, images_dir, cfg.raster, cfg.jobs)
        if not cfg.table_path:
            stage(
                "embed", embed_images, images_dir, table_path, cfg.model_tag,
                endpoint_url=cfg.endpoint,
                pixel_side=cfg.pixel_side if not cfg.endpoint else 0,
            )
        results_csv = out / "geo_results.csv"
        acc = stage("eval", eval_geo, gen_dir, table_path, results_csv, cfg.model_tag)
        artifacts["results_csv"] = str(results_csv)
        acc_report = {
            "analysis": "geo_accuracy",
            "model": cfg.model_tag,
            "overall": acc["overall"],
            "close": acc["close"],
            "far": acc["far"],
            "n_pairs": acc["n_pairs"],
            "version": __version__,
        }
        (out / "geo_accuracy.json").write_text(canonical_json(acc_report) + "\n", encoding="utf-8")
        done.append("analyze-accuracy")
    else:
        raise ConfigError(f"unknown task {cfg.task!r}")

    from .report import build_report

    stage("report", build_report, out)
    finish_manifest()
    return {"stages": done, "out_dir": str(out)}
