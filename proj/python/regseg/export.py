"""Checkpoint export into the engine's weight container.

    python -m regseg.export export --src ckpt --preset regseg --map map.txt --out model.rtc
    python -m regseg.export verify --container model.rtc [--preset regseg]

Checkpoints are read from .npz archives, or from PyTorch files (.pt, .pth,
.bin) when torch is importable. Exit codes follow the engine CLI: 0 ok,
1 verification failed, 2 usage or mapping syntax, 4 coverage or shape
errors, 6 unreadable input.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import container
from .mapping import CoverageError, MappingError, MappingSyntaxError, NameMapping, TensorShapeError


def _core():
    from . import _core as core
    return core


def load_checkpoint(path: str | os.PathLike) -> dict[str, np.ndarray]:
    path = os.fspath(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            return {k: np.asarray(z[k]) for k in z.files}
    import torch

    obj = torch.load(path, map_location="cpu", weights_only=True)
    for key in ("state_dict", "model"):
        if isinstance(obj, dict) and isinstance(obj.get(key), dict):
            obj = obj[key]
    return {k: v.detach().cpu().numpy() for k, v in obj.items() if hasattr(v, "detach")}


def preset_slots(preset: str = "regseg", schedule: str | None = None,
                 classes: int | None = None) -> dict[str, tuple]:
    """Slot name -> engine shape, in graph order."""
    return {name: shape for name, shape, _ in
            _core().param_slots(preset, schedule, classes)}


@dataclass
class ExportReport:
    out_path: str
    slots: int
    unused_sources: list[str]
    filled_eps: list[str]


def export_checkpoint(src: str | os.PathLike | Mapping[str, np.ndarray], preset: str,
                      mapping: NameMapping | str | os.PathLike, out_path: str | os.PathLike,
                      *, schedule: str | None = None, classes: int | None = None,
                      bn_eps: float = 1e-5) -> ExportReport:
    """Write the engine container for `preset` from a checkpoint.

    Raises CoverageError naming unmapped slots and TensorShapeError listing
    per-tensor shape mismatches; nothing is written in either case.
    """
    source = dict(src) if isinstance(src, Mapping) else load_checkpoint(src)
    if not isinstance(mapping, NameMapping):
        mapping = NameMapping.load(mapping)
    result = mapping.apply(source, preset_slots(preset, schedule, classes), bn_eps)
    metadata = dict(_core().model_metadata(preset, schedule, classes))
    metadata["bn_eps"] = repr(float(np.float32(bn_eps)))
    container.write(out_path, result.tensors, metadata)
    return ExportReport(os.fspath(out_path), len(result.tensors), result.unused_sources,
                        result.filled_eps)


@dataclass
class VerifyReport:
    path: str
    preset: str
    problems: list[str] = field(default_factory=list)
    params: int = 0
    tensors: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems

    def format(self) -> str:
        lines = [f"container {self.path}", f"preset    {self.preset}",
                 f"tensors   {self.tensors}",
                 f"params    {self.params} ({self.params / 1e6:.2f}M)"]
        lines += [f"problem   {p}" for p in self.problems]
        lines.append("status    " + ("ok" if self.ok else f"{len(self.problems)} problem(s)"))
        return "\n".join(lines) + "\n"


def verify_container(path: str | os.PathLike, preset: str | None = None) -> VerifyReport:
    """Coverage, shapes and layout of a container against its preset.

    The preset comes from the container metadata unless given. Parsing uses
    the pure-Python reader, which checks alignment, ordering and checksum.
    """
    report = VerifyReport(os.fspath(path), preset or "")
    try:
        c = container.read(path)
    except (OSError, container.ContainerError) as e:
        report.problems.append(f"unreadable: {e}")
        return report
    meta = c.metadata
    report.preset = preset or meta.get("preset", "regseg")
    classes = int(meta["num_classes"]) if "num_classes" in meta else None
    slots = _core().param_slots(report.preset, meta.get("schedule"), classes)
    report.tensors = len(c.tensors)
    known = set()
    for name, shape, learnable in slots:
        known.add(name)
        t = c.tensors.get(name)
        if t is None:
            report.problems.append(f"{name}: missing")
        elif tuple(t.shape) != tuple(shape):
            report.problems.append(f"{name}: shape {tuple(t.shape)}, expected {tuple(shape)}")
        elif learnable:
            report.params += int(t.size)
    report.problems += [f"{name}: not a slot of {report.preset}"
                        for name in sorted(set(c.tensors) - known)]
    return report


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="regseg-export", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    e = sub.add_parser("export", help="convert a checkpoint")
    e.add_argument("--src", required=True)
    e.add_argument("--preset", default="regseg")
    e.add_argument("--map", required=True, dest="mapping")
    e.add_argument("--out", required=True)
    e.add_argument("--schedule")
    e.add_argument("--classes", type=int)
    e.add_argument("--bn-eps", type=float, default=1e-5)
    v = sub.add_parser("verify", help="check a container against its preset")
    v.add_argument("--container", required=True)
    v.add_argument("--preset")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0) and 2

    if args.command == "verify":
        report = verify_container(args.container, args.preset)
        sys.stdout.write(report.format())
        return 0 if report.ok else 1

    try:
        r = export_checkpoint(args.src, args.preset, args.mapping, args.out,
                              schedule=args.schedule, classes=args.classes,
                              bn_eps=args.bn_eps)
    except MappingSyntaxError as err:
        print(f"error (mapping): {err}", file=sys.stderr)
        return 2
    except (CoverageError, TensorShapeError, MappingError) as err:
        print(f"error (binding): {err}", file=sys.stderr)
        return 4
    except OSError as err:
        print(f"error (io): {err}", file=sys.stderr)
        return 6
    print(f"wrote {r.slots} tensors to {r.out_path}")
    if r.unused_sources:
        print(f"ignored {len(r.unused_sources)} unmatched source tensor(s): "
              + ", ".join(r.unused_sources))
    return 0


if __name__ == "__main__":
    sys.exit(main())
