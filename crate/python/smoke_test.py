#!/usr/bin/env python3
"""Smoke test for the iqtex Python bindings.

Builds the extension if needed (``cargo build -p iqtex-py``), imports it,
and exercises one representative call per exposed surface: metrics,
whitening, both quality estimators with a save/load round trip, and texture
retrieval. Exits non-zero on the first failed check.

Run from anywhere: ``python3 python/smoke_test.py``
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
SO = REPO / "target" / "debug" / "libiqtex.so"


def ensure_extension() -> Path:
    """Builds the cdylib if missing and stages it under its import name."""
    if not SO.exists():
        subprocess.run(["cargo", "build", "-p", "iqtex-py"], cwd=REPO, check=True)
    stage = Path(tempfile.mkdtemp(prefix="iqtex_py_"))
    shutil.copy2(SO, stage / "iqtex.so")
    return stage


def check(name: str, ok: bool, detail: str = "") -> None:
    print(f"{'ok' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
    if not ok:
        sys.exit(1)


def main() -> None:
    sys.path.insert(0, str(ensure_extension()))
    import iqtex

    # Metrics against hand values.
    check("spearman", abs(iqtex.spearman([1, 2, 3], [1, 3, 2]) - 0.5) < 1e-12)
    check("pearson affine", abs(iqtex.pearson([1, 2, 5], [3, 5, 11]) - 1.0) < 1e-12)
    check("rmse", abs(iqtex.rmse([0, 0], [3, 4]) - math.sqrt(12.5)) < 1e-12)

    # Whitening drives patch covariance toward the identity.
    patches = iqtex.natural_like_patches(4, 400, 1)
    check("patch shape", len(patches) == 400 and len(patches[0]) == 48)
    white = iqtex.whiten(patches, 2)
    n, d = len(white), len(white[0])
    mean = [sum(p[i] for p in white) / n for i in range(d)]
    var = [sum((p[i] - mean[i]) ** 2 for p in white) / (n - 1) for i in range(d)]
    worst = max(abs(v - 1.0) for v in var)
    check("whitened variance near 1", worst < 0.2, f"max deviation {worst:.3f}")

    tmp = Path(tempfile.mkdtemp(prefix="iqtex_data_"))
    corpus = iqtex.write_texture_corpus(str(tmp / "corpus"), 80, 2, 3)
    corpus.sort()
    check("corpus size", len(corpus) == 24)
    first_path, _ = corpus[0]

    # Quality estimators: identical images score exactly 1, and models
    # survive a save/load round trip bit for bit.
    unique = iqtex.UniqueModel.train(
        iqtex.natural_like_patches(4, 400, 5), hidden=6, side=4, iterations=15, seed=5
    )
    check("unique self-score", unique.score(first_path, first_path) == 1.0)
    unique.save(str(tmp / "unique.json"))
    reloaded = iqtex.UniqueModel.load(str(tmp / "unique.json"))
    blurrier = corpus[1][0]
    check(
        "unique round trip",
        reloaded.score(first_path, blurrier) == unique.score(first_path, blurrier),
    )

    msu = iqtex.MsUniqueModel.train(
        iqtex.natural_like_patches(4, 400, 6),
        hidden_sizes=[5, 6],
        side=4,
        iterations=10,
        seed=6,
    )
    check("ensemble members", msu.member_count == 2)
    check("ensemble self-score", msu.score(first_path, first_path) == 1.0)

    # Texture retrieval: a barely-trained model still ranks the corpus's
    # lexicographically first image top-1 for its own query (self-match
    # correlation is exactly 1 and ties break by id).
    model = iqtex.TextureModel.train(
        [path for path, _ in corpus],
        h_color=4,
        h2=4,
        h3=4,
        h_final=4,
        pool_k=2,
        crops_per_image=1,
        iterations=4,
        seed=3,
    )
    color, structure = model.features(first_path)
    check("feature dims", len(color) == 4 and len(structure) == 4)

    index = iqtex.RetrievalIndex.build(
        model, [(Path(p).name, cls, p) for p, cls in corpus]
    )
    check("index size", len(index) == 24)
    top = index.query(model, first_path)[0]
    check(
        "self-query rank 1",
        top[0] == Path(first_path).name and top[2] == 1.0,
        f"top: {top[0]} corr {top[2]:.3f}",
    )
    p1, mrr, ap = index.evaluate(samples_per_class=2)
    check("evaluation in range", all(0.0 <= v <= 1.0 for v in (p1, mrr, ap)))

    index.save(str(tmp / "index.json"))
    check(
        "index round trip",
        len(iqtex.RetrievalIndex.load(str(tmp / "index.json"))) == 24,
    )

    print("smoke test passed")


if __name__ == "__main__":
    main()
