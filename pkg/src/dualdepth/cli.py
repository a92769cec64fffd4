"""The ``dualdepth`` command line."""

from __future__ import annotations

import glob
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import evalkit, fileio
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig, dump_config, load_config, parse_size
from .synthdata import SynthConfig, gen_dataset
from .tensor_core import Tensor, resize_bilinear
from .training import TrainingError, infer_files, train_stage


class _Abort(click.ClickException):
    pass


def _config(path) -> TrainConfig:
    if path is None:
        return TrainConfig()
    try:
        return load_config(path)
    except (ConfigError, OSError) as exc:
        raise _Abort(str(exc)) from None


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except (CheckpointError, OSError) as exc:
        raise _Abort(str(exc)) from None


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool) -> None:
    """Two-stage self-supervised monocular depth on synthetic box scenes."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)


@main.command()
@click.option("--out", required=True, type=click.Path(file_okay=False), help="Dataset directory.")
@click.option("--count", required=True, type=click.IntRange(min=1))
@click.option("--seed", required=True, type=int)
@click.option("--lr-size", default="64x192", show_default=True, help="LR size HxW; frames are rendered at 3x.")
def gen(out, count, seed, lr_size):
    """Render a synthetic triplet dataset."""
    try:
        h, w = parse_size(lr_size)
        if h % 32 or w % 32:
            raise ConfigError(f"{h}x{w} must be divisible by 32")
    except ConfigError as exc:
        raise click.BadParameter(str(exc), param_hint="--lr-size") from None
    try:
        gen_dataset(out, count, seed, SynthConfig(hr_size=(3 * h, 3 * w)))
    except OSError as exc:
        raise _Abort(str(exc)) from None
    click.echo(f"wrote {count} triplets to {out}")


def _train(stage, data, out, config, init):
    cfg = _config(config)
    ckpt = _load_ckpt(init) if init else None

    def report(rec):
        click.echo(f"epoch={rec.epoch} loss={rec.mean_loss:.6f} lr={rec.lr:g} seconds={rec.seconds:.1f}")

    try:
        result = train_stage(stage, cfg, data, ckpt, on_epoch=report)
    except (TrainingError, OSError, ValueError) as exc:
        raise _Abort(str(exc)) from None
    save_checkpoint(result.checkpoint, out)
    click.echo(f"saved {stage} checkpoint to {out}")


@main.command("train-lr")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="key = value file; defaults if omitted.")
@click.option("--init", type=click.Path(exists=True, dir_okay=False), help="lr checkpoint to resume from.")
def train_lr(data, out, config, init):
    """Train LR-Net and PoseNet."""
    _train("lr", data, out, config, init)


@main.command("train-hr")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--init", required=True, type=click.Path(exists=True, dir_okay=False),
              help="lr checkpoint (fresh HR stage) or hr checkpoint (resume).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
def train_hr(data, init, out, config):
    """Train the SA embedding and HR-Net with LR-Net and PoseNet frozen."""
    _train("hr", data, out, config, init)


@main.command("show-config")
def show_config():
    """Print every config key with its default."""
    click.echo(dump_config(TrainConfig()), nl=False)


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stage", required=True, type=click.Choice(["lr", "hr"]))
@click.option("--images", required=True, help="Glob of PPM images, e.g. 'data/*/target.ppm'.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
def infer(ckpt, stage, images, out):
    """Write DPTH depth maps and inverse-depth PGM previews."""
    paths = sorted(glob.glob(images))
    if not paths:
        raise _Abort(f"no images match {images!r}")
    try:
        written = infer_files(_load_ckpt(ckpt), paths, stage, out)
    except (ValueError, OSError, TrainingError) as exc:
        raise _Abort(str(exc)) from None
    click.echo(f"wrote {len(written)} depth maps to {out}")


def _depth_files(directory) -> list[Path]:
    files = sorted(Path(directory).glob("*.bin"))
    if not files:
        raise _Abort(f"no .bin depth maps in {directory}")
    return files


def _gt_for(pred_file: Path, gt_dir: Path) -> Path:
    flat = gt_dir / pred_file.name
    if flat.exists():
        return flat
    triplet_id = pred_file.stem.rsplit("_", 1)[0]
    nested = gt_dir / triplet_id / "depth.bin"
    if nested.exists():
        return nested
    raise _Abort(f"no ground truth for {pred_file.name}: tried {flat} and {nested}")


def _region_for(pred_file: Path, region: Path, gt_dir: Path) -> np.ndarray:
    triplet_id = pred_file.stem.rsplit("_", 1)[0]
    if region.is_dir():
        candidate = region / f"{triplet_id}.pgm"
    elif region.exists():
        candidate = region
    else:
        # a bare file name is looked up inside each ground-truth triplet directory
        candidate = gt_dir / triplet_id / region.name
    try:
        return fileio.read_pgm(candidate) > 127
    except (OSError, ValueError) as exc:
        raise _Abort(f"region mask for {pred_file.name}: {exc}") from None


def _emit(rows: dict[str, evalkit.MetricReport], out_dir: Path, stem: str, extra_lines=()) -> None:
    text = evalkit.format_table(rows)
    kv = "\n".join(evalkit.format_kv(r, name) for name, r in rows.items())
    click.echo(text)
    click.echo(kv)
    for line in extra_lines:
        click.echo(line)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{stem}.txt").write_text(text + "\n" + kv + "\n" + "".join(f"{x}\n" for x in extra_lines))


@main.command("eval")
@click.option("--pred", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt", required=True, type=click.Path(exists=True, file_okay=False),
              help="Dataset root (NNNNNN/depth.bin) or a directory of same-named .bin files.")
@click.option("--median-scale", is_flag=True, help="Align each prediction by the median ratio.")
@click.option("--band", type=float, default=None, help="Split into near/far bands at this depth (e.g. 20).")
@click.option("--region", type=click.Path(), default=None,
              help="PGM mask file, a directory of <id>.pgm masks, or a file name inside each triplet dir.")
@click.option("--report", type=click.Path(file_okay=False), default=None,
              help="Where to write eval.txt and figures (default: --pred).")
def eval_cmd(pred, gt, median_scale, band, region, report):
    """Depth metrics of predictions against ground truth.

    Predictions smaller than the ground truth are bilinearly upsampled to it.
    """
    gt_dir, out_dir = Path(gt), Path(report or pred)
    per_row: dict[str, list[evalkit.MetricReport]] = {}
    first = None
    for f in _depth_files(pred):
        try:
            p = fileio.read_depth(f)
            g = fileio.read_depth(_gt_for(f, gt_dir))
        except (OSError, ValueError) as exc:
            raise _Abort(str(exc)) from None
        if p.shape != g.shape:
            p = resize_bilinear(Tensor(p[None, None]), *g.shape).data[0, 0]
        mask = _region_for(f, Path(region), gt_dir) if region else None
        try:
            rows = evalkit.evaluate_pair(p, g, median_scale, band, mask)
        except ValueError as exc:
            raise _Abort(f"{f.name}: {exc}") from None
        for name, r in rows.items():
            per_row.setdefault(name, []).append(r)
        if first is None:
            first = (f, evalkit.median_align(p, g) if median_scale else p, g)
    rows = {name: evalkit.mean_reports(rs) for name, rs in per_row.items()}
    _emit(rows, out_dir, "eval", [f"images={len(per_row['all'])}"])
    from . import plotting
    plotting.metrics_figure(rows, out_dir / "eval_metrics.png")
    plotting.error_map_figure(first[1], first[2], out_dir / "eval_example.png", first[0].name)


@main.command()
@click.option("--depth", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--threshold", type=float, default=0.0, show_default=True, help="Tenengrad threshold t.")
@click.option("--report", type=click.Path(file_okay=False), default=None,
              help="Where to write sharpness.txt and figures (default: --depth).")
def sharpness(depth, threshold, report):
    """Per-image Tenengrad of depth maps and their mean."""
    files = _depth_files(depth)
    maps = [fileio.read_depth(f) for f in files]
    scores = [evalkit.tenengrad(m, threshold) for m in maps]
    out_dir = Path(report or depth)
    width = max(len(f.stem) for f in files)
    lines = [f"{'image':<{width}} {'tenengrad':>14}"] + [f"{f.stem:<{width}} {s:>14.4f}" for f, s in zip(files, scores)]
    click.echo("\n".join(lines))
    kv = [f"tenengrad.mean={np.mean(scores):.6g}", f"tenengrad.threshold={threshold:g}", f"images={len(files)}"]
    click.echo("\n".join(kv))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sharpness.txt").write_text("\n".join(lines + kv) + "\n")
    from . import plotting
    plotting.sharpness_figure([f.stem for f in files], scores, maps[0], out_dir / "sharpness.png")


if __name__ == "__main__":
    main()
