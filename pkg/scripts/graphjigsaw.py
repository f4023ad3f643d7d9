"""GraphJigsaw command line

Usage:
    python scripts/graphjigsaw.py train --config configs/synthetic.yaml --data.root data/synth --seed 7
    python scripts/graphjigsaw.py eval --checkpoint runs/<run>/checkpoints/last.pt \
        --probe-root data/probe --distractor-root data/distractor --ks 1 5 10
    python scripts/graphjigsaw.py visualize --checkpoint last.pt --images a.png b.png --gallery-root data/probe
    python scripts/graphjigsaw.py retrieve --checkpoint last.pt --queries q.png --gallery-root data/gallery
    python scripts/graphjigsaw.py synthesize --out data/synth --num-classes 20 --images-per-class 100

Every command writes run.json under --out. Exit codes:
    0 success, 2 configuration error, 3 data error, 4 numeric abort
"""

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

import torch  # noqa: E402

from core.errors import ConfigError, DataError, GraphJigsawError  # noqa: E402
from services.data_pipeline import augment, generate_synthetic, load_rgb, scan_dataset  # noqa: E402
from services.identification import (  # noqa: E402
    LabeledEmbedding,
    embed_manifest,
    evaluate_identification,
    plot_cmc,
    read_embedding_dump,
    retrieve,
    write_cmc_csv,
    write_embedding_dump,
    write_summary,
)
from services.training import build_datasets, load_backbone, load_checkpoint, load_config, train  # noqa: E402
from ui.utils.report_exporter import generate_html_report  # noqa: E402
from ui.visualizer import render_retrieval_grid, save_attention_overlays  # noqa: E402


# ------------------------------------------------------------
# HELPERS
# ------------------------------------------------------------

def parse_overrides(tokens: Sequence[str]) -> List[Tuple[str, str]]:
    """
    Turn leftover ``--section.key value`` / ``--section.key=value`` tokens into pairs.

    Raises:
        ConfigError: token that is not a dotted override, or a missing value
    """
    pairs = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"Unrecognised argument: {token}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(tokens):
                raise ConfigError(f"Override {token} needs a value")
            value = tokens[i + 1]
            i += 2
        pairs.append((key, value))
    return pairs


def timestamped_dir(root: Path, prefix: str) -> Path:
    base = root / f"{prefix}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    path, n = base, 1
    while path.exists():
        path = base.with_name(f"{base.name}_{n}")
        n += 1
    path.mkdir(parents=True)
    return path


def write_run_index(out: Path, command: str, args: argparse.Namespace, outputs: List[Path], seed: Optional[int]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    arguments = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "handler"}
    index = {
        "command": command,
        "arguments": json.loads(json.dumps(arguments, default=str)),
        "outputs": sorted(str(p) for p in outputs),
        "seed": seed,
    }
    path = out / "run.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(index, f, indent=2)
    return path


def transform_sizes(archive: Dict[str, Any]) -> Tuple[int, int]:
    data = archive.get("config", {}).get("data", {})
    crop = data.get("crop", archive["backbone_config"]["input_resolution"])
    return data.get("resize", crop), crop


@torch.no_grad()
def embed_images(backbone, paths: Sequence[Path], resize: int, crop: int, identities: Sequence[str]) -> List[LabeledEmbedding]:
    embeddings = []
    for path, identity in zip(paths, identities):
        tensor = augment(load_rgb(path), train=False, resize=resize, crop=crop)
        vector = backbone.embed(tensor.unsqueeze(0))[0].double().numpy()
        embeddings.append(LabeledEmbedding.normalized(identity, vector, source=str(path)))
    return embeddings


def gallery_embeddings(backbone, gallery_root: Path, resize: int, crop: int) -> List[LabeledEmbedding]:
    manifest = scan_dataset(gallery_root, min_images=1, split="distractor")
    return embed_manifest(backbone, manifest, resize=resize, crop=crop)


def _drop_self(query: Path, gallery_root: Path, gallery: List[LabeledEmbedding]) -> List[LabeledEmbedding]:
    resolved = query.resolve()
    return [g for g in gallery if (gallery_root / g.source).resolve() != resolved]


# ------------------------------------------------------------
# COMMANDS
# ------------------------------------------------------------

def cmd_train(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[List[Path], Optional[int]]:
    overrides = parse_overrides(extra)
    if args.seed is not None:
        overrides.append(("train.seed", str(args.seed)))
    config = load_config(args.config, overrides)
    train_ds, val_ds, _ = build_datasets(config)
    run_dir = timestamped_dir(Path(args.out), "train")
    print(f"[CLI] Training into {run_dir}")
    result = train(train_ds, config, run_dir, resume=args.resume, val_dataset=val_ds)
    outputs = [run_dir / "config.yaml", result.metrics_csv, run_dir / "summary.json"]
    outputs += sorted((run_dir / "checkpoints").glob("*.pt"))
    return outputs, config.train.seed


def cmd_eval(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[List[Path], Optional[int]]:
    out = Path(args.out)
    outputs: List[Path] = []
    if args.probe_dump and args.distractor_dump:
        probes = read_embedding_dump(args.probe_dump)
        distractors = read_embedding_dump(args.distractor_dump)
    else:
        if not (args.checkpoint and args.probe_root and args.distractor_root):
            raise ConfigError("eval needs --checkpoint, --probe-root and --distractor-root (or both embedding dumps)")
        archive = load_checkpoint(args.checkpoint)
        backbone = load_backbone(archive)
        resize, crop = transform_sizes(archive)
        probe_manifest = scan_dataset(Path(args.probe_root), min_images=1, split="probe")
        distractor_manifest = scan_dataset(Path(args.distractor_root), min_images=1, split="distractor")
        probes = embed_manifest(backbone, probe_manifest, resize, crop, batch_size=args.batch_size)
        distractors = embed_manifest(backbone, distractor_manifest, resize, crop, batch_size=args.batch_size)
        outputs.append(write_embedding_dump(out / "probe_embeddings.tsv", probes))
        outputs.append(write_embedding_dump(out / "distractor_embeddings.tsv", distractors))

    report = evaluate_identification(probes, distractors, ks=args.ks, k_max=args.k_max)
    if report.excluded_identities:
        print(f"[CLI] ⚠️ Skipped {len(report.excluded_identities)} identity(ies) with < 2 probe images")
    outputs.append(write_summary(out / "summary.json", report.summary))
    outputs.append(write_cmc_csv(out / "cmc.csv", report.cmc))
    outputs.append(plot_cmc(out / "cmc.png", {"model": report.cmc}))
    return outputs, None


def _retrieval_rows(
    query: Path,
    models: Dict[str, Tuple[Any, List[LabeledEmbedding], Tuple[int, int]]],
    gallery_root: Path,
    top_k: int,
):
    """Hits per model for one query; identity is the query's parent folder when the gallery knows it."""
    rows = {}
    for label, (backbone, gallery, (resize, crop)) in models.items():
        known = {g.identity for g in gallery}
        identity = query.parent.name
        embedded = embed_images(backbone, [query], resize, crop, [identity])[0]
        rows[label] = retrieve(embedded, _drop_self(query, gallery_root, gallery), top_k=top_k,
                               known_identity=identity in known)
    return rows


def _load_models(args: argparse.Namespace) -> Dict[str, Tuple[Any, Tuple[int, int]]]:
    models = {}
    for label, path in (("graphjigsaw", args.checkpoint), ("baseline", getattr(args, "baseline_checkpoint", None))):
        if path:
            archive = load_checkpoint(path)
            models[label] = (load_backbone(archive), transform_sizes(archive))
    return models


def cmd_visualize(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[List[Path], Optional[int]]:
    out = Path(args.out)
    models = _load_models(args)
    sections: Dict[str, List[Path]] = {}
    outputs: List[Path] = []

    for label, (backbone, (resize, crop)) in models.items():
        overlays = []
        for image in args.images:
            prefix = "" if label == "graphjigsaw" else f"{label}_"
            overlays += save_attention_overlays(backbone, image, out / "overlays", resize, crop, prefix=prefix)
        sections[f"Attention maps ({label})"] = overlays
        outputs += overlays

    if args.gallery_root:
        gallery_root = Path(args.gallery_root)
        with_gallery = {
            label: (backbone, gallery_embeddings(backbone, gallery_root, *sizes), sizes)
            for label, (backbone, sizes) in models.items()
        }
        grids = []
        for image in args.images:
            rows = _retrieval_rows(Path(image), with_gallery, gallery_root, args.top_k)
            grids.append(render_retrieval_grid(image, rows, gallery_root, out / "retrieval" / f"{Path(image).stem}_grid.png"))
        sections["Retrieval (red dotted = incorrect)"] = grids
        outputs += grids

    report = generate_html_report(sections, out / "report.html",
                                  metadata={"checkpoint": args.checkpoint, "images": len(args.images)})
    outputs.append(Path(report))
    print(f"[Visualizer] ✅ {len(outputs)} file(s) written under {out}")
    return outputs, args.seed


def cmd_retrieve(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[List[Path], Optional[int]]:
    out = Path(args.out)
    gallery_root = Path(args.gallery_root)
    backbone, sizes = _load_models(args)["graphjigsaw"]
    gallery = gallery_embeddings(backbone, gallery_root, *sizes)

    results, outputs = {}, []
    for query in args.queries:
        rows = _retrieval_rows(Path(query), {"graphjigsaw": (backbone, gallery, sizes)}, gallery_root, args.top_k)
        results[str(query)] = [hit.to_dict() for hit in rows["graphjigsaw"]]
        outputs.append(render_retrieval_grid(query, rows, gallery_root, out / "retrieval" / f"{Path(query).stem}_grid.png"))

    path = out / "retrieval.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(results, f, indent=2)
    outputs.append(path)
    return outputs, args.seed


def cmd_synthesize(args: argparse.Namespace, extra: Sequence[str]) -> Tuple[List[Path], Optional[int]]:
    seed = args.seed if args.seed is not None else 0
    dataset = generate_synthetic(Path(args.out), args.num_classes, args.images_per_class, args.resolution, seed)
    return [dataset.root / "attributes.json"] + [dataset.root / name for name in dataset.attributes], seed


# ------------------------------------------------------------
# ENTRY POINT
# ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphjigsaw", description="GraphJigsaw training, evaluation and visualization")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, default_out: str) -> None:
        p.add_argument("--out", default=default_out, help="Output directory (run.json is written here)")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="Train a model; extra --section.key value pairs override the config")
    common(p, "runs")
    p.add_argument("--config", default=None, help="YAML run configuration")
    p.add_argument("--resume", default=None, help="Checkpoint to continue from")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("eval", help="Rank@K / CMC identification evaluation")
    common(p, "runs/eval")
    p.add_argument("--checkpoint")
    p.add_argument("--probe-root")
    p.add_argument("--distractor-root")
    p.add_argument("--probe-dump", help="Score an existing probe embedding dump instead of a checkpoint")
    p.add_argument("--distractor-dump")
    p.add_argument("--ks", type=int, nargs="+", default=[1, 5, 10])
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("visualize", help="Grad-CAM overlays and retrieval grids")
    common(p, "runs/visualize")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline-checkpoint", default=None)
    p.add_argument("--images", nargs="+", required=True)
    p.add_argument("--gallery-root", default=None)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(handler=cmd_visualize)

    p = sub.add_parser("retrieve", help="Top-K gallery retrieval for query images")
    common(p, "runs/retrieve")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--queries", nargs="+", required=True)
    p.add_argument("--gallery-root", required=True)
    p.add_argument("--top-k", type=int, default=5)
    p.set_defaults(handler=cmd_retrieve)

    p = sub.add_parser("synthesize", help="Write the synthetic cartoon-face dataset")
    common(p, "data/synthetic")
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--images-per-class", type=int, default=100)
    p.add_argument("--resolution", type=int, default=64)
    p.set_defaults(handler=cmd_synthesize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if extra and args.command != "train":
            raise ConfigError(f"Unrecognised arguments: {' '.join(extra)}")
        if args.seed is not None and args.command != "train":
            torch.manual_seed(args.seed)
        outputs, seed = args.handler(args, extra)
        write_run_index(Path(args.out), args.command, args, outputs, seed)
    except GraphJigsawError as e:
        print(f"[CLI] ❌ {e}", file=sys.stderr)
        return e.exit_code
    except (ValueError, OSError) as e:
        print(f"[CLI] ❌ {e}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
