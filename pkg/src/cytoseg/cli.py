"""Batch command line: ``segment``, ``evaluate`` and ``phantom``.

Exit codes: 0 success, 2 input or layout error, 3 config or phantom-parameter error.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import shutil
import sys
import tempfile
from dataclasses import fields
from pathlib import Path

import numpy as np
from scipy import ndimage as ndi

from .imagecore import ImageReadError, UnsupportedImageError, load_grayscale, load_mask, save_image, save_mask
from .metrics import evaluate
from .morphology import connected_components
from .phantom import PhantomError, PhantomSpec, generate_phantom
from .pipeline import PipelineConfig, PipelineError, run_pipeline

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3

_INT_KEYS = {
    "median_kernel", "ahe_tiles", "hmax_h", "min_clump_area", "min_nucleus_area",
    "init_disc_margin", "edf_window", "drlse_max_iters", "drlse_check_every",
}
_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([^=\s][^=]*?)$")
_CELL_FILE = re.compile(r"^cell_(\d{4,})\.png$")

log = logging.getLogger("cytoseg")


class ConfigError(ValueError):
    pass


class LayoutError(ValueError):
    pass


def config_keys() -> list:
    return list(PipelineConfig().as_flat_dict())


def parse_config(text: str) -> PipelineConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    known = set(config_keys())
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = m.group(1), m.group(2).strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: {key} is set twice")
        try:
            values[key] = int(value) if key in _INT_KEYS else float(value)
        except ValueError:
            kind = "an integer" if key in _INT_KEYS else "a number"
            raise ConfigError(f"line {lineno}: {key} must be {kind}, got {value!r}") from None
    try:
        return PipelineConfig.from_flat_dict(values)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def format_config(cfg: PipelineConfig) -> str:
    return "".join(f"{k} = {v!r}\n" for k, v in cfg.as_flat_dict().items())


def _boundary(mask: np.ndarray) -> np.ndarray:
    return mask & ~ndi.binary_erosion(mask, structure=np.ones((3, 3), bool), border_value=0)


def render_overlay(image, cells, nuclei) -> np.ndarray:
    """Input with cell outlines at 255 and nucleus outlines at 0."""
    out = np.asarray(image, dtype=np.uint8).copy()
    for cell in cells:
        out[_boundary(cell)] = 255
    out[_boundary(nuclei > 0)] = 0
    return out


def _write_atomically(out: Path, write) -> None:
    """Build the directory next to ``out`` and swap it in when complete."""
    out = Path(out)
    if out.exists() and not (out / "provenance.txt").is_file():
        if not out.is_dir() or any(out.iterdir()):
            raise LayoutError(f"{out} exists and is not an output directory; refusing to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        write(tmp)
        if out.exists():
            shutil.rmtree(out)
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def write_mask_directory(root: Path, clumps, nuclei, cells, provenance: str) -> None:
    (root / "cells").mkdir()
    save_mask(clumps.astype(np.int32), root / "clumps.png")
    save_mask(nuclei.astype(np.int32), root / "nuclei.png")
    for i, cell in enumerate(cells, start=1):
        save_mask(np.asarray(cell, dtype=bool), root / "cells" / f"cell_{i:04d}.png")
    (root / "provenance.txt").write_text(provenance)


def read_cells(root) -> list:
    """Load ``cells/cell_####.png`` in order, checking numbering and sizes."""
    cell_dir = Path(root) / "cells"
    if not cell_dir.is_dir():
        raise LayoutError(f"{root}: missing cells/ directory")
    numbered = []
    for path in cell_dir.iterdir():
        m = _CELL_FILE.match(path.name)
        if m is None:
            raise LayoutError(f"{path}: unexpected file in cells/")
        numbered.append((int(m.group(1)), path))
    numbered.sort()
    if [n for n, _ in numbered] != list(range(1, len(numbered) + 1)):
        raise LayoutError(f"{cell_dir}: cell files must be numbered contiguously from 0001")
    masks = [load_mask(p) for _, p in numbered]
    if len({m.shape for m in masks}) > 1:
        raise LayoutError(f"{cell_dir}: cell masks differ in size")
    return masks


def _load_stack(stack_dir) -> list:
    paths = sorted(p for p in Path(stack_dir).iterdir() if p.suffix.lower() in (".png", ".pgm"))
    if not paths:
        raise LayoutError(f"{stack_dir}: no .png or .pgm images")
    return [load_grayscale(p) for p in paths]


def _provenance(cfg, result, source: str) -> str:
    lines = ["# cytoseg segment provenance; feed back with --config to rerun", f"# input: {source}"]
    lines.append(format_config(cfg).rstrip("\n"))
    lines.append(f"# clumps: {result.provenance['n_clumps']}")
    lines.append(f"# nuclei: {result.provenance['n_nuclei']}")
    for i, (label, run) in enumerate(zip(result.cell_clumps, result.provenance["drlse_runs"]), 1):
        if run:
            state = "converged" if run["converged"] else "not converged"
            lines.append(f"# cell {i:04d}: clump {label}, contour {run['iterations']} steps, {state}")
        else:
            lines.append(f"# cell {i:04d}: clump {label}, single-nucleus clump")
    return "\n".join(lines) + "\n"


def cmd_segment(args) -> int:
    try:
        cfg = parse_config(Path(args.config).read_text()) if args.config else PipelineConfig()
    except OSError as exc:
        return _fail(EXIT_CONFIG, f"cannot read config: {exc}")
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, f"config {args.config}: {exc}")
    try:
        if args.stack:
            stack = _load_stack(args.stack)
            source, data = f"stack {Path(args.stack).name} ({len(stack)} planes)", stack
            image = stack[0] if len(stack) == 1 else None
        else:
            image = load_grayscale(args.input)
            source, data = Path(args.input).name, image
        result = run_pipeline(data, cfg)
        if image is None:
            from .pipeline import edf_fuse
            image = edf_fuse(data, cfg.edf_window)

        def write(tmp: Path):
            write_mask_directory(tmp, result.clumps, result.nuclei, result.cells,
                                 _provenance(cfg, result, source))
            if args.overlay:
                save_image(render_overlay(image, result.cells, result.nuclei), tmp / "overlay.png")

        _write_atomically(Path(args.out), write)
    except (ImageReadError, UnsupportedImageError, LayoutError, PipelineError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(f"{len(result.cells)} cells written to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        pred = read_cells(args.pred)
        gt = read_cells(args.gt)
        if not gt:
            raise LayoutError(f"{args.gt}: ground truth has no cells")
        if pred and pred[0].shape != gt[0].shape:
            raise LayoutError("prediction and ground truth differ in size")
        report = evaluate(pred, gt)
        Path(args.report).write_text(report.to_text())
    except (ImageReadError, UnsupportedImageError, LayoutError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(f"{report.dc_mean:.4f}")
    return EXIT_OK


def cmd_phantom(args) -> int:
    try:
        spec = PhantomSpec(n_cells=args.cells, overlap_level=args.overlap, seed=args.seed,
                           width=args.size, height=args.size, noise_sigma=args.noise,
                           n_groups=args.groups)
        image, cells, nuclei = generate_phantom(spec)
    except PhantomError as exc:
        return _fail(EXIT_CONFIG, f"phantom: {exc}")
    union = np.any(cells, axis=0)
    clumps = connected_components(union, 8)
    nuclei_labels = np.zeros(image.shape, dtype=np.int32)
    for i, nucleus in enumerate(nuclei, start=1):
        nuclei_labels[nucleus] = i
    text = "# cytoseg phantom ground truth\n" + "".join(
        f"{f.name} = {getattr(spec, f.name)!r}\n" for f in fields(spec))

    def write(tmp: Path):
        save_image(image, tmp / "image.png")
        write_mask_directory(tmp, clumps, nuclei_labels, cells, text)

    try:
        _write_atomically(Path(args.out), write)
    except (LayoutError, OSError) as exc:
        return _fail(EXIT_INPUT, str(exc))
    print(f"phantom with {len(cells)} cells written to {args.out}")
    return EXIT_OK


def _fail(code: int, message: str) -> int:
    print(f"cytoseg: error: {message}", file=sys.stderr)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cytoseg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    seg = sub.add_parser("segment", help="segment cells in an image or focal stack")
    src = seg.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="8-bit PNG or PGM image")
    src.add_argument("--stack", help="directory of focal planes, fused before segmentation")
    seg.add_argument("--config", help="key = value configuration file")
    seg.add_argument("--out", required=True, help="output mask directory")
    seg.add_argument("--overlay", action="store_true", help="also write overlay.png")
    seg.set_defaults(func=cmd_segment)

    ev = sub.add_parser("evaluate", help="score predicted cells against ground truth")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--report", required=True)
    ev.set_defaults(func=cmd_evaluate)

    ph = sub.add_parser("phantom", help="write a synthetic specimen with ground truth")
    ph.add_argument("--seed", type=int, default=42)
    ph.add_argument("--cells", type=int, default=3)
    ph.add_argument("--overlap", type=float, default=0.3)
    ph.add_argument("--noise", type=float, default=4.0)
    ph.add_argument("--size", type=int, default=256)
    ph.add_argument("--groups", type=int, default=1)
    ph.add_argument("--out", required=True)
    ph.set_defaults(func=cmd_phantom)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="cytoseg: %(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
