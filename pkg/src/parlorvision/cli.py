"""Command-line entry point.

Subcommands: extract (run the keyframe pipeline over a frame stream),
dataset (LabelMe -> COCO aggregation and split), evaluate (score detections
against ground truth), registry (benchmark metadata), ledger (byte
accounting report). Exit codes: 0 success, 2 backend failure, 3 sink
failure, 4 input validation failure.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

import click

from . import annotations as ann
from .backends import model_registry, scripted_backend, with_deadline
from .errors import (
    BackendError,
    ContractViolation,
    FixtureError,
    SinkWriteError,
    ValidationError,
)
from .extractor import DirectorySink, ExtractorConfig, process_stream
from .frames import load_frame_stream
from .ledger import StorageLedger, load_entries, render_table
from .metrics import EvalConfig, EvalResult, evaluate
from .types import GtAnnotation, BBox
from .wire import WireBackend

EXIT_BACKEND = 2
EXIT_SINK = 3
EXIT_INVALID = 4


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_INVALID, f"cannot read config {path}: {exc}")
    if not isinstance(raw, dict):
        _fail(EXIT_INVALID, f"config {path} must hold a JSON object")
    return raw


def _merged(config: dict, **flags) -> dict:
    """Config-file values with non-None flags laid over them."""
    merged = dict(config)
    for key, value in flags.items():
        if value is not None:
            merged[key] = value
    return merged


@click.group()
def main():
    """Teat-health keyframe pipeline and evaluation toolkit."""


# --------------------------------------------------------------------------
# extract


def _open_backend(spec: str, timeout_ms: float):
    kind, _, rest = spec.partition(":")
    if kind == "scripted" and rest:
        return scripted_backend(rest), None
    if kind == "wire" and rest:
        backend = WireBackend(rest, timeout_ms=timeout_ms)
        return backend, backend
    raise ValidationError(
        f"backend must be scripted:<fixture> or wire:<endpoint>, got {spec!r}")


@main.command()
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file; flags override its values.")
@click.option("--frames", default=None, help="frames.jsonl manifest path.")
@click.option("--backend", "backend_spec", default=None,
              help="scripted:<fixture.json> or wire:<endpoint>.")
@click.option("--output-root", default=None)
@click.option("--session", default=None)
@click.option("--extraction-rate", type=int, default=None)
@click.option("--budget-ms", type=float, default=None)
@click.option("--timeout-ms", type=float, default=None,
              help="Wire response timeout (default 5000).")
def extract(config_path, frames, backend_spec, output_root, session,
            extraction_rate, budget_ms, timeout_ms):
    """Run keyframe extraction over a frame stream."""
    file_cfg = _load_config_file(config_path)
    cfg = _merged(file_cfg, frames=frames, backend=backend_spec,
                  output_root=output_root, session=session,
                  extraction_rate=extraction_rate, budget_ms=budget_ms,
                  timeout_ms=timeout_ms)
    for required in ("frames", "backend", "output_root"):
        if required not in cfg:
            _fail(EXIT_INVALID, f"missing required setting {required!r}")

    extractor_keys = ("output_root", "session", "extraction_rate", "ocr_conf_min",
                      "det_conf_min", "edge_margin_frac", "center_margin_frac",
                      "expected_teat_count", "detect_task")
    try:
        ex_cfg = ExtractorConfig(**{k: cfg[k] for k in extractor_keys if k in cfg})
    except (ValueError, TypeError) as exc:
        _fail(EXIT_INVALID, f"bad extractor config: {exc}")

    try:
        backend, closeable = _open_backend(str(cfg["backend"]),
                                           float(cfg.get("timeout_ms", 5000)))
    except ValidationError as exc:
        _fail(EXIT_INVALID, str(exc))
    except (BackendError, FixtureError) as exc:
        _fail(EXIT_BACKEND, f"cannot open backend: {exc}")

    ledger = StorageLedger()
    latency_records = []
    monitored = with_deadline(backend, budget_ms=float(cfg.get("budget_ms", 2000)),
                              log=latency_records.append)
    session_dir = ex_cfg.output_root / ex_cfg.session
    if session_dir.exists():
        # re-runs overwrite: stale records would otherwise accumulate in manifests
        try:
            shutil.rmtree(session_dir)
        except OSError as exc:
            _fail(EXIT_SINK, f"cannot clear previous session dir {session_dir}: {exc}")
    sink = DirectorySink(ex_cfg.output_root, ex_cfg.session, ledger=ledger)

    try:
        state = process_stream(load_frame_stream(cfg["frames"]), monitored,
                               monitored, ex_cfg, sink, ledger=ledger)
    except SinkWriteError as exc:
        partial = exc.state.counters() if exc.state is not None else {}
        _fail(EXIT_SINK, f"sink failure: {exc}; partial state: {json.dumps(partial)}")
    except BackendError as exc:
        _fail(EXIT_BACKEND, f"backend failure: {exc}")
    except (ValidationError, ContractViolation) as exc:
        _fail(EXIT_INVALID, f"bad frame stream: {exc}")
    finally:
        if closeable is not None:
            closeable.close()

    root = ex_cfg.output_root
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / "ledger.json").write_text(
            json.dumps(ledger.report().to_dict(), indent=2) + "\n", encoding="utf-8")
        with (root / "ledger_entries.jsonl").open("w", encoding="utf-8") as fh:
            for e in ledger.entries():
                fh.write(json.dumps({"category": e.category, "path": e.path,
                                     "bytes": e.bytes}) + "\n")
        with (root / "latency.jsonl").open("w", encoding="utf-8") as fh:
            for record in latency_records:
                fh.write(json.dumps(record.to_dict()) + "\n")
    except OSError as exc:
        _fail(EXIT_SINK, f"cannot write reports under {root}: {exc}")

    click.echo(json.dumps(state.counters()))


# --------------------------------------------------------------------------
# dataset


@main.command()
@click.option("--inputs", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Directory of LabelMe JSON files.")
@click.option("--task", "task_name", required=True,
              type=click.Choice(sorted(ann.TASKS)))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=".")
@click.option("--train-frac", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="Print stats as JSON.")
def dataset(inputs, task_name, out_dir, train_frac, seed, as_json):
    """Aggregate LabelMe files into COCO train/val datasets."""
    task = ann.get_task(task_name)
    files = sorted(Path(inputs).glob("*.json"))
    if not files:
        _fail(EXIT_INVALID, f"no .json files under {inputs}")
    docs = []
    for path in files:
        try:
            docs.append(ann.parse_labelme(path.read_bytes()))
        except (ValidationError, OSError) as exc:
            _fail(EXIT_INVALID, f"{path}: {exc}")
    try:
        ds = ann.aggregate(docs, task)
        spec = ann.SplitSpec(train_frac=train_frac if train_frac is not None else 0.9,
                             seed=seed if seed is not None else 0)
        train, val = ann.split(ds, spec)
    except (ValidationError, ValueError) as exc:
        _fail(EXIT_INVALID, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{task.name}_train.json").write_text(ann.dumps_coco(train), encoding="utf-8")
    (out / f"{task.name}_val.json").write_text(ann.dumps_coco(val), encoding="utf-8")

    stats = ann.class_stats(ds)
    if as_json:
        click.echo(json.dumps({
            "images": len(ds.images),
            "annotations": len(ds.annotations),
            "categories": len(ds.categories),
            "train_images": len(train.images),
            "val_images": len(val.images),
            "counts": stats.counts,
            "imbalance": list(stats.imbalance) if stats.imbalance else None,
        }, indent=2))
    else:
        width = max(len("category"), *(len(n) for n in stats.counts))
        click.echo(f"{'category'.ljust(width)}  count")
        click.echo(f"{'-' * width}  -----")
        for name, count in stats.counts.items():
            click.echo(f"{name.ljust(width)}  {count}")
        if stats.imbalance:
            click.echo(f"imbalance ratio: {stats.imbalance[0]}:{stats.imbalance[1]}")
        click.echo(f"images: {len(ds.images)}  annotations: {len(ds.annotations)}  "
                   f"train/val: {len(train.images)}/{len(val.images)}")


# --------------------------------------------------------------------------
# evaluate


def _f6(value: float | None) -> str:
    return "null" if value is None else f"{value:.6f}"


def render_eval_json(result: EvalResult) -> str:
    """EvalResult as UTF-8 JSON with 6-decimal fixed numeric formatting."""
    lines = ["{", '  "ap": {']
    for ci, class_id in enumerate(result.class_ids):
        lines.append(f'    "{class_id}": {{')
        for ti, threshold in enumerate(result.iou_thresholds):
            cell_all = _f6(result.ap.get((class_id, threshold, "all")))
            cell_small = _f6(result.ap.get((class_id, threshold, "small")))
            comma = "," if ti < len(result.iou_thresholds) - 1 else ""
            lines.append(f'      "{threshold:.2f}": '
                         f'{{"all": {cell_all}, "small": {cell_small}}}{comma}')
        comma = "," if ci < len(result.class_ids) - 1 else ""
        lines.append(f"    }}{comma}")
    lines.append("  },")
    lines.append(f'  "map_all": {_f6(result.map_all)},')
    lines.append(f'  "map_small": {_f6(result.map_small)}')
    lines.append("}")
    return "\n".join(lines)


def _class_band_mean(result: EvalResult, class_id: int, band: str) -> float | None:
    cells = [result.ap[(class_id, t, band)] for t in result.iou_thresholds
             if result.ap.get((class_id, t, band)) is not None]
    if not cells:
        return None
    return sum(cells) / len(cells)


@main.command("evaluate")
@click.option("--gt", "gt_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--iou-thresholds", default=None,
              help="Comma-separated ladder, e.g. 0.5,0.75.")
@click.option("--recall-points", type=int, default=None)
@click.option("--small-area-max", type=float, default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the result JSON only.")
def evaluate_cmd(gt_path, pred_path, iou_thresholds, recall_points,
                 small_area_max, as_json):
    """Score a detection file against COCO ground truth."""
    kwargs = {}
    if iou_thresholds is not None:
        try:
            kwargs["iou_thresholds"] = tuple(float(v) for v in iou_thresholds.split(","))
        except ValueError as exc:
            _fail(EXIT_INVALID, f"bad --iou-thresholds: {exc}")
    if recall_points is not None:
        kwargs["recall_points"] = recall_points
    if small_area_max is not None:
        kwargs["small_area_max"] = small_area_max
    try:
        cfg = EvalConfig(**kwargs)
        ds = ann.load_coco(Path(gt_path).read_bytes())
        violations = ann.validate_coco(ds)
        if violations:
            _fail(EXIT_INVALID, f"{gt_path}: " + "; ".join(violations[:5]))
        dets = ann.load_detections(Path(pred_path).read_bytes())
    except (ValidationError, ValueError, OSError) as exc:
        _fail(EXIT_INVALID, str(exc))

    images = {im.id: (im.width, im.height) for im in ds.images}
    category_ids = {c.id for c in ds.categories}
    for det in dets:
        if det.class_id not in category_ids:
            _fail(EXIT_INVALID,
                  f"{pred_path}: detection category {det.class_id} not in ground truth")
        if det.image_id not in images:
            _fail(EXIT_INVALID,
                  f"{pred_path}: detection references unknown image {det.image_id}")
    gts = [GtAnnotation(id=a.id, image_id=a.image_id, class_id=a.category_id,
                        bbox=BBox.from_list(list(a.bbox)))
           for a in ds.annotations]
    result = evaluate(gts, dets, images, cfg, class_ids=sorted(category_ids))

    if not as_json:
        names = {c.id: c.name for c in ds.categories}
        width = max(len("class"), *(len(names[c]) for c in result.class_ids), 5)
        click.echo(f"{'class'.ljust(width)}  {'AP(all)':>9}  {'AP(small)':>9}")
        click.echo(f"{'-' * width}  {'-' * 9}  {'-' * 9}")
        for class_id in result.class_ids:
            mean_all = _class_band_mean(result, class_id, "all")
            mean_small = _class_band_mean(result, class_id, "small")
            click.echo(f"{names[class_id].ljust(width)}  "
                       f"{_f6(mean_all):>9}  {_f6(mean_small):>9}")
        click.echo(f"map_all = {_f6(result.map_all)}")
        click.echo(f"map_small = {_f6(result.map_small)}")
    else:
        click.echo(render_eval_json(result))


# --------------------------------------------------------------------------
# registry / ledger


@main.command()
@click.option("--json", "as_json", is_flag=True)
def registry(as_json):
    """Print the benchmark model cards."""
    cards = model_registry()
    if as_json:
        click.echo(json.dumps([card.__dict__ for card in cards], indent=2))
        return
    headers = ("model", "task", "mAP-small", "avg ms", "params (M)", "compute")
    rows = [(c.name, c.task, f"{c.map_small:.3f}", str(c.avg_inference_ms),
             f"{c.params_millions:.3f}", c.compute) for c in cards]
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(6)]
    click.echo("  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip())
    click.echo("  ".join("-" * widths[i] for i in range(6)))
    for row in rows:
        click.echo("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())


@main.command()
@click.argument("entries_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
def ledger(entries_file, as_json):
    """Render a storage report from a JSONL entries file."""
    try:
        entries = load_entries(entries_file)
    except ValidationError as exc:
        _fail(EXIT_INVALID, str(exc))
    book = StorageLedger()
    for e in entries:
        book.record(e)
    report = book.report()
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        click.echo(render_table(report))


if __name__ == "__main__":
    main()
