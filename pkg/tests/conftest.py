"""Shared fixtures: synthetic oracle embeddings and human-data generators."""

import csv
import random

import numpy as np
import pytest

from geombench import quads
from geombench.embeddings import EmbeddingTable


def oracle_oddball_table(
    trials, seed=0, score_jitter=1.2, ambient=0.4, dim=8
) -> EmbeddingTable:
    """Embeddings that encode each polygon's regularity score plus noise.

    First coordinate carries the (jittered) profile score; the rest is
    isotropic noise.  An outlier rule on these vectors should find oddballs
    easily for regular classes and be at chance for property-free ones.
    """
    rng = random.Random(seed)
    entries = {}
    for t in trials:
        for s in t.slots:
            score = quads.regularity_profile(s.vertices).score
            vec = np.empty(dim, dtype=np.float32)
            vec[0] = score + rng.gauss(0.0, score_jitter)
            for j in range(1, dim):
                vec[j] = rng.gauss(0.0, ambient)
            entries[s.stim_id] = vec
    return EmbeddingTable(model_tag="oracle-regularity", dim=dim, entries=entries)


def synthetic_dmts_human_csv(
    path, manifest, n_subjects=8, seed=0,
    choice_coef=0.035, encoding_coef=0.05, noise=0.08, error_rate=0.0182,
):
    """Trial-level human CSV where log RTs follow the stimulus complexity.

    choice RT loads on complexity via choice_coef, encoding via
    encoding_coef; both get lognormal noise.  Exactly round(rate x trials)
    trials are marked incorrect so the dataset's mean error is known.
    Returns the rows written.
    """
    rng = random.Random(seed)
    ids = [r["id"] for r in manifest]
    mdl = {r["id"]: r["mdl"] for r in manifest}
    total = n_subjects * len(ids)
    wrong = set(rng.sample(range(total), round(error_rate * total)))
    rows = []
    trial = 0
    for subj in range(n_subjects):
        for target in ids:
            pool = [s for s in ids if s != target]
            distractors = rng.sample(pool, 5)
            choice = 900.0 * np.exp(choice_coef * mdl[target] + rng.gauss(0, noise))
            encoding = 1400.0 * np.exp(encoding_coef * mdl[target] + rng.gauss(0, noise))
            rows.append(
                {
                    "subject": f"s{subj:02d}",
                    "trial": trial,
                    "target": target,
                    "distractors": ";".join(distractors),
                    "encoding_rt_ms": f"{encoding:.3f}",
                    "choice_rt_ms": f"{choice:.3f}",
                    "correct": int(trial not in wrong),
                }
            )
            trial += 1
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return rows


@pytest.fixture(scope="session")
def small_lot_dir(tmp_path_factory):
    """A small generated + rendered stroke-program run, shared across tests."""
    from geombench.pipeline import gen_lot, render_stimuli

    out = tmp_path_factory.mktemp("lotrun")
    gen_lot(out / "gen", n=40, seed=7)
    render_stimuli(out / "gen", out / "images")
    return out
