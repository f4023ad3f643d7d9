"""
Evaluation artifacts.

  embeddings.tsv   path <TAB> identity <TAB> space-separated vector (%.8f)
  summary.json     {"rank1": ..., "rank5": ..., "rank10": ..., "num_probes": ...}
  cmc.csv          k, identification_rate
  cmc.png          CMC curve(s)

The dump format is model-agnostic: any producer that writes
unit vectors in it can be scored by the evaluator.
"""

import json
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from core.errors import DataError  # noqa: E402

from .metrics import CMCResult  # noqa: E402
from .protocol import LabeledEmbedding  # noqa: E402

VECTOR_FORMAT = "%.8f"


def write_embedding_dump(path: Union[str, Path], embeddings: Sequence[LabeledEmbedding]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for e in embeddings:
            vector = " ".join(VECTOR_FORMAT % x for x in e.vector)
            f.write(f"{e.source}\t{e.identity}\t{vector}\n")
    return path


def read_embedding_dump(path: Union[str, Path]) -> List[LabeledEmbedding]:
    """
    Read a dump back; vectors are re-normalised to undo rounding.

    Raises:
        DataError: missing file or malformed line
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Embedding dump not found: {path}")
    embeddings = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            source, identity, vector = parts
            try:
                values = [float(x) for x in vector.split()]
                embeddings.append(LabeledEmbedding.normalized(identity, values, source=source))
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}")
    return embeddings


def write_summary(path: Union[str, Path], summary: Mapping[str, float]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dict(summary), f, indent=2)
    return path


def write_cmc_csv(path: Union[str, Path], result: CMCResult) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(result.to_rows(), columns=["k", "identification_rate"]).to_csv(
        path, index=False, lineterminator="\n", float_format="%.10g"
    )
    return path


def plot_cmc(path: Union[str, Path], curves: Dict[str, CMCResult], title: str = "CMC") -> Path:
    """One line per named curve, identification rate against rank."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, result in curves.items():
        ax.plot(range(1, result.k_max + 1), result.ranks, marker="." if result.k_max <= 30 else None, label=name)
    ax.set_xlabel("Rank")
    ax.set_ylabel("Identification rate")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
