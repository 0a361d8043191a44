"""Command-line entry point for scanning families, running loops, detecting and verifying rank-loss points."""
import argparse
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from berry_svd.utils.config import ContinuationOptions, DetectorOptions, PhaseOptions, ProbeOptions
from berry_svd.utils.continuation import GaugeMode, read_trace_sidecar, trace_to_frame, write_trace_sidecar
from berry_svd.utils.detector import detect, detection_to_dict, read_detection_points
from berry_svd.utils.embedding import (
    check_embedding_identities,
    discr_limit_probe,
    genericity_det,
    sigma_limit_probe,
)
from berry_svd.utils.errors import (
    BerrySVDError,
    ConfigError,
    ContinuationFailedError,
    DimensionError,
    DomainError,
    NearDegenerateError,
    ParseError,
)
from berry_svd.utils.linalg import unitarity_defect
from berry_svd.utils.model import Box, MatrixFamily, PathLoop, eval_family, grid_scan, parse_family, parse_loop
from berry_svd.utils.phase import embedded_berry_phases, format_report, loop_phases, report_to_dict, wrap_to_pi
from berry_svd.utils.plotting import plot_sigma_surface, save_figure

logger = logging.getLogger(__name__)

SIGNED_VALUE_FLAGS = ("--box", "--circle", "--point")
SIGNED_VALUE = re.compile(r"^-\.?\d")
BERRY_TOL = 1e-2
TRACE_TOL = 1e-8


class ExitCode(IntEnum):
    """Process exit codes; CONTINUATION also covers any other numerical breakdown."""

    OK = 0
    CONFIG = 2
    CONTINUATION = 3
    BUDGET = 4
    VERIFICATION = 5


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one CLI invocation."""

    command: str
    family: Path
    out: Path
    box: Optional[Box] = None
    loop: Optional[PathLoop] = None
    gauge: GaugeMode = GaugeMode.JOINT
    samples: Optional[int] = None
    resolution: int = 41
    plot: bool = False
    sidecar: bool = False
    seed: int = 0
    points: Tuple[Tuple[float, float], ...] = ()
    checks: int = 20
    radius: float = 0.05
    trace: Optional[Path] = None
    detector: DetectorOptions = field(default_factory=DetectorOptions)
    continuation: ContinuationOptions = field(default_factory=ContinuationOptions)
    phase: PhaseOptions = field(default_factory=PhaseOptions)
    probe: ProbeOptions = field(default_factory=ProbeOptions)

    def __post_init__(self):
        if self.samples is not None and self.samples < 8:
            raise ConfigError(f"--samples must be >= 8, got {self.samples}")
        if self.resolution < 2:
            raise ConfigError(f"--resolution must be >= 2, got {self.resolution}")
        if self.checks < 0:
            raise ConfigError(f"--checks must be >= 0, got {self.checks}")
        if not self.radius > 0:
            raise ConfigError(f"--radius must be > 0, got {self.radius}")


def _read_text(path: Path, what: str) -> str:
    if not path.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return path.read_text()


def _parse_floats(text: str, count: int, flag: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects {count} comma separated numbers, got {text!r}") from exc
    if len(values) != count:
        raise ConfigError(f"{flag} expects {count} comma separated numbers, got {text!r}")
    return values


def join_signed_values(argv: Sequence[str]) -> List[str]:
    """Rewrite '--box -1,1,-1,1' as '--box=-1,1,-1,1' so a leading minus is not read as an option."""
    tokens = list(argv)
    joined: List[str] = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        if token in SIGNED_VALUE_FLAGS and i + 1 < len(tokens) and SIGNED_VALUE.match(tokens[i + 1]):
            joined.append(f"{token}={tokens[i + 1]}")
            i += 2
        else:
            joined.append(token)
            i += 1
    return joined


def build_parser() -> argparse.ArgumentParser:
    """Subcommands scan, loop, detect and verify with their flags."""
    parser = argparse.ArgumentParser(
        prog="berry-svd", description="Detect loss of rank of A(x, y) from phases of the smooth SVD around loops."
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--family", required=True, help="family JSON document")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)

    scan = sub.add_parser("scan", parents=[common], help="tabulate sigma_min, gap and |det| on a grid")
    scan.add_argument("--box", default="-1,1,-1,1", help="xmin,xmax,ymin,ymax")
    scan.add_argument("--resolution", type=int, default=41)
    scan.add_argument("--plot", action="store_true", help="also write sigma_surface.png")

    loop = sub.add_parser("loop", parents=[common], help="accrued phases around one loop")
    shape = loop.add_mutually_exclusive_group(required=True)
    shape.add_argument("--loop", help="loop JSON document")
    shape.add_argument("--circle", help="cx,cy,r")
    shape.add_argument("--box", help="rectangle xmin,xmax,ymin,ymax")
    loop.add_argument("--gauge", choices=[g.value for g in GaugeMode], default=GaugeMode.JOINT.value)
    loop.add_argument("--samples", type=int)
    loop.add_argument("--sidecar", action="store_true", help="also write the U, V frames as binary")

    det = sub.add_parser("detect", parents=[common], help="localize rank-loss points in a box")
    det.add_argument("--box", default="-1,1,-1,1", help="xmin,xmax,ymin,ymax")
    det.add_argument("--samples", type=int)
    det.add_argument("--loc-tol", type=float, default=DetectorOptions.loc_tol)
    det.add_argument("--max-cells", type=int, default=DetectorOptions.max_cells)
    det.add_argument("--initial-splits", type=int, default=0)

    verify = sub.add_parser("verify", parents=[common], help="genericity probes and embedding identities")
    where = verify.add_mutually_exclusive_group()
    where.add_argument("--point", help="x,y")
    where.add_argument("--detection", help="detection.json from the detect command")
    verify.add_argument("--trace", help="output directory of a 'loop --sidecar' run to re-check")
    verify.add_argument("--checks", type=int, default=20, help="random embedding identity checks")
    verify.add_argument("--radius", type=float, default=0.05, help="circle radius for the Berry phase comparison")
    verify.add_argument("--samples", type=int, default=512, help="samples on that circle")
    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Turn parsed arguments into a validated RunConfig."""
    kwargs = dict(command=args.command, family=Path(args.family), out=Path(args.out), seed=args.seed)
    if args.command == "scan":
        kwargs.update(box=Box.parse(args.box), resolution=args.resolution, plot=args.plot)
    elif args.command == "loop":
        if args.loop:
            loop = parse_loop(_read_text(Path(args.loop), "loop"))
        elif args.circle:
            cx, cy, r = _parse_floats(args.circle, 3, "--circle")
            loop = PathLoop.circle((cx, cy), r)
        else:
            loop = PathLoop.rect(Box.parse(args.box))
        if args.samples is not None:
            if args.samples < 8:
                raise ConfigError(f"--samples must be >= 8, got {args.samples}")
            loop = loop.with_samples(args.samples)
        kwargs.update(loop=loop, gauge=GaugeMode(args.gauge), samples=args.samples, sidecar=args.sidecar)
    elif args.command == "detect":
        samples = args.samples if args.samples is not None else DetectorOptions.samples
        detector = DetectorOptions(
            loc_tol=args.loc_tol, max_cells=args.max_cells, samples=samples, initial_splits=args.initial_splits
        )
        kwargs.update(box=Box.parse(args.box), samples=args.samples, detector=detector)
    elif args.command == "verify":
        if args.point:
            points = (tuple(_parse_floats(args.point, 2, "--point")),)
        elif args.detection:
            points = tuple(read_detection_points(_read_text(Path(args.detection), "detection")))
        else:
            points = ()
        if not points and args.trace is None:
            raise ConfigError("verify needs --point, --detection or --trace")
        trace = Path(args.trace) if args.trace is not None else None
        kwargs.update(points=points, checks=args.checks, radius=args.radius, samples=args.samples, trace=trace)
    return RunConfig(**kwargs)


def load_family(config: RunConfig) -> MatrixFamily:
    """Read and parse the family document named in the config."""
    return parse_family(_read_text(config.family, "family"))


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


def _write_json(path: Path, doc: dict):
    path.write_text(json.dumps(doc, indent=2, allow_nan=False))
    logger.info("Wrote %s", path)


def cmd_scan(config: RunConfig) -> ExitCode:
    """Write the sigma surface CSV and print where sigma_min is smallest."""
    family = load_family(config)
    surface = grid_scan(family, config.box, config.resolution)
    config.out.mkdir(parents=True, exist_ok=True)
    surface.to_frame().to_csv(config.out / "surface.csv", index=False)

    (x, y), value = surface.argmin()
    cell = surface.argmin_cell()
    summary = {
        "argmin": [x, y],
        "sigma_min": value,
        "argmin_cell": cell.as_list(),
        "min_gap": float(np.min(surface.gap)),
        "nodes": int(surface.sigma_min.size),
    }
    _write_json(config.out / "scan_summary.json", summary)
    print(f"grid {surface.xs.size}x{surface.ys.size}: min sigma_{family.n} = {value:.6e} at ({x:+.4f}, {y:+.4f})")
    print(f"cell around the minimum: {cell.as_list()}")
    print(f"min singular gap on grid: {summary['min_gap']:.6e}")
    if config.plot:
        fig = plot_sigma_surface(surface)
        save_figure(fig, config.out / "sigma_surface.png")
    return ExitCode.OK


def cmd_loop(config: RunConfig) -> ExitCode:
    """Run the continuation around one loop and print its phase table."""
    family = load_family(config)
    trace, report = loop_phases(family, config.loop, config.gauge, config.continuation, config.phase)
    config.out.mkdir(parents=True, exist_ok=True)
    _write_json(config.out / "phases.json", report_to_dict(report))
    trace_to_frame(trace).to_csv(config.out / "trace.csv", index=False)
    if config.sidecar:
        write_trace_sidecar(trace, config.out / "trace_frames.bin")
    print(f"gauge {config.gauge.value}, {len(trace) - 1} steps")
    print(format_report(report))
    return ExitCode.OK


def cmd_detect(config: RunConfig) -> ExitCode:
    """Localize rank-loss points; exit code 4 when the cell budget ran out."""
    family = load_family(config)
    result = detect(family, config.box, config.detector)
    config.out.mkdir(parents=True, exist_ok=True)
    _write_json(config.out / "detection.json", detection_to_dict(result))
    print(f"{len(result.points)} points ({result.cells_tested} cells tested)")
    for point in result.points:
        x, y = point.location
        generic = "generic" if point.genericity.regular else "NOT generic"
        print(f"  ({x:+.10f}, {y:+.10f})  |det| = {point.polish_residual:.2e}  {generic}")
    for cell in result.inconclusive_cells:
        print(f"  inconclusive {cell.box.as_list()}: {cell.reason}")
    if result.budget_exceeded:
        print("cell budget exhausted, result is partial", file=sys.stderr)
        return ExitCode.BUDGET
    return ExitCode.OK


def berry_agreement(family: MatrixFamily, xi: Sequence[float], config: RunConfig) -> dict:
    """Compare the joint singular-vector phases with the Berry phases of the embedding on a circle around xi."""
    loop = PathLoop.circle(xi, config.radius, config.samples or 512)
    try:
        _, report = loop_phases(family, loop, GaugeMode.JOINT, config.continuation, config.phase)
        berry = embedded_berry_phases(family, loop)
    except (ContinuationFailedError, NearDegenerateError) as exc:
        logger.info("Berry phase comparison skipped at %s: %s", list(xi), exc)
        return {"applicable": False, "reason": str(exc), "agree": True}
    difference = max(abs(wrap_to_pi(b - e)) for b, e in zip(report.beta, berry))
    return {
        "applicable": True,
        "radius": config.radius,
        "beta": [float(b) for b in report.beta],
        "embedded": [float(b) for b in berry],
        "max_difference": float(difference),
        "agree": bool(difference <= BERRY_TOL),
    }


def verify_point(family: MatrixFamily, xi: Sequence[float], config: RunConfig) -> dict:
    """Genericity of the determinant, both limit probes and the Berry phase comparison at one candidate point."""
    probe = config.probe
    generic = genericity_det(family, xi, gen_tol=probe.gen_tol)
    sigma = sigma_limit_probe(family, xi, opts=probe)
    discr = discr_limit_probe(family, xi, opts=probe)
    applicable = sigma.applicable and discr.applicable
    agree = not applicable or (generic.regular == sigma.positive == discr.positive)
    berry = berry_agreement(family, xi, config)
    return {
        "xy": [float(xi[0]), float(xi[1])],
        "absdet": abs(generic.det_value),
        "regular": generic.regular,
        "jacobian_min_singular_value": generic.min_singular_value,
        "sigma_probe": {
            "applicable": sigma.applicable,
            "positive": sigma.positive,
            "min": _finite_or_none(sigma.normalized_min),
        },
        "discr_probe": {
            "applicable": discr.applicable,
            "positive": discr.positive,
            "min": _finite_or_none(discr.normalized_min),
        },
        "berry": berry,
        "agree": agree and berry["agree"],
    }


def verify_trace(family: MatrixFamily, directory: Path) -> dict:
    """Re-check the frames a 'loop --sidecar' run wrote: unitarity, reconstruction and U/V endpoint consistency."""
    table = directory / "trace.csv"
    sidecar = directory / "trace_frames.bin"
    for path in (table, sidecar):
        if not path.is_file():
            raise ConfigError(f"trace file not found: {path}")
    frame = pd.read_csv(table)
    Us, Vs = read_trace_sidecar(sidecar, family.n)
    if len(Us) != len(frame):
        raise ParseError(f"sidecar holds {len(Us)} frames, trace.csv has {len(frame)} rows", str(sidecar))
    sigma_columns = [f"sigma_{j + 1}" for j in range(family.n)]
    unitarity = 0.0
    reconstruction = 0.0
    for (_, row), U, V in zip(frame.iterrows(), Us, Vs):
        A = eval_family(family, (row["x"], row["y"]))
        sigma = row[sigma_columns].to_numpy(dtype=float)
        unitarity = max(unitarity, unitarity_defect(U), unitarity_defect(V))
        error = float(np.linalg.norm((U * sigma) @ V.conj().T - A)) / max(1.0, float(np.linalg.norm(A)))
        reconstruction = max(reconstruction, error)

    gauge = None
    phases = directory / "phases.json"
    if phases.is_file():
        gauge = json.loads(phases.read_text()).get("gauge")
    mismatch = None
    if gauge == GaugeMode.JOINT.value:
        P = np.diag(Us[0].conj().T @ Us[-1])
        Q = np.diag(Vs[0].conj().T @ Vs[-1])
        mismatch = float(np.max(np.abs(P - Q)))
    passed = unitarity <= TRACE_TOL and reconstruction <= TRACE_TOL and (mismatch is None or mismatch <= TRACE_TOL)
    return {
        "frames": len(Us),
        "gauge": gauge,
        "max_unitarity_defect": unitarity,
        "max_reconstruction_error": reconstruction,
        "uv_mismatch": mismatch,
        "passed": passed,
    }


def cmd_verify(config: RunConfig) -> ExitCode:
    """Probe candidate points and check the embedding identities; exit code 5 on any failure."""
    family = load_family(config)
    rng = np.random.default_rng(config.seed)
    points = [verify_point(family, xi, config) for xi in config.points]

    checks = []
    for _ in range(config.checks):
        A = rng.normal(size=(family.n, family.n)) + 1j * rng.normal(size=(family.n, family.n))
        checks.append(check_embedding_identities(A, float(rng.uniform(-1.0, 1.0))))
    for xi in config.points:
        nearby = np.asarray(xi) + rng.uniform(-0.1, 0.1, size=2)
        checks.append(check_embedding_identities(eval_family(family, nearby), float(rng.uniform(-1.0, 1.0))))
    full = [c for c in checks if c.applicable]

    failed_checks = sum(not c.passed for c in checks)
    disagreements = sum(not p["agree"] for p in points)
    trace = verify_trace(family, config.trace) if config.trace is not None else None
    doc = {
        "points": points,
        "embedding_checks": {
            "count": len(checks),
            "failed": failed_checks,
            "spectrum_only": len(checks) - len(full),
            "max_spectrum_error": max((c.spectrum_error for c in checks), default=0.0),
            "max_decomposition_residual": max((c.decomposition_residual for c in full), default=0.0),
            "max_discriminant_error": max((c.discriminant_error for c in full), default=0.0),
        },
        "trace": trace,
        "passed": failed_checks == 0 and disagreements == 0 and (trace is None or trace["passed"]),
    }
    config.out.mkdir(parents=True, exist_ok=True)
    _write_json(config.out / "verify.json", doc)

    for p in points:
        flag = "generic" if p["regular"] else "NOT generic"
        print(f"({p['xy'][0]:+.8f}, {p['xy'][1]:+.8f}): {flag}, probes agree: {p['agree']}")
    print(f"embedding identities: {len(checks) - failed_checks}/{len(checks)} passed")
    if trace is not None:
        print(f"trace frames: {trace['frames']}, {'passed' if trace['passed'] else 'FAILED'}")
    return ExitCode.OK if doc["passed"] else ExitCode.VERIFICATION


COMMANDS = {"scan": cmd_scan, "loop": cmd_loop, "detect": cmd_detect, "verify": cmd_verify}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit code."""
    raw = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(join_signed_values(raw))
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = build_config(args)
        return int(COMMANDS[config.command](config))
    except (ConfigError, ParseError, DimensionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.CONFIG)
    except ContinuationFailedError as exc:
        print(f"continuation failed: {exc}", file=sys.stderr)
        return int(ExitCode.CONTINUATION)
    except BerrySVDError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return int(ExitCode.CONTINUATION)


if __name__ == "__main__":
    sys.exit(main())
