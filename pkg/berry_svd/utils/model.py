"""Parametrized matrix families A(x, y), closed loops in parameter space and sigma surfaces."""
import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy.linalg

from berry_svd.utils.errors import ConfigError, ParseError
from berry_svd.utils.linalg import as_square_matrix, det, svd_point

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


@dataclass(frozen=True)
class FamilyTerm:
    """One coefficient matrix M multiplying x**jx * y**ky."""

    jx: int
    ky: int
    matrix: np.ndarray


@dataclass(frozen=True)
class MatrixFamily:
    """Polynomial family A(x, y) = sum of x**jx * y**ky * M over its terms."""

    n: int
    terms: Tuple[FamilyTerm, ...]

    def __post_init__(self):
        seen = set()
        for term in self.terms:
            if term.matrix.shape != (self.n, self.n):
                raise ConfigError(f"term ({term.jx},{term.ky}) has shape {term.matrix.shape}, expected {self.n}")
            if term.jx < 0 or term.ky < 0:
                raise ConfigError(f"negative exponent in term ({term.jx},{term.ky})")
            if (term.jx, term.ky) in seen:
                raise ConfigError(f"duplicate term ({term.jx},{term.ky})")
            seen.add((term.jx, term.ky))

    @classmethod
    def from_terms(cls, terms: Sequence[Tuple[int, int, Any]]) -> "MatrixFamily":
        """Build a family from (jx, ky, matrix) tuples."""
        built = tuple(FamilyTerm(int(j), int(k), as_square_matrix(m)) for j, k, m in terms)
        if not built:
            raise ConfigError("a family needs at least one term")
        return cls(built[0].matrix.shape[0], built)

    @property
    def degree(self) -> int:
        """Largest total degree jx + ky over the terms."""
        return max(term.jx + term.ky for term in self.terms)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax]."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        values = (self.xmin, self.xmax, self.ymin, self.ymax)
        if not all(math.isfinite(v) for v in values):
            raise ConfigError(f"box has non-finite bounds {values}")
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ConfigError(f"degenerate box {values}")

    @classmethod
    def parse(cls, text: str) -> "Box":
        """Read 'xmin,xmax,ymin,ymax'."""
        try:
            values = [float(v) for v in text.split(",")]
        except ValueError as exc:
            raise ConfigError(f"cannot read box {text!r}: {exc}") from exc
        if len(values) != 4:
            raise ConfigError(f"box needs 4 comma separated values, got {text!r}")
        return cls(*values)

    @property
    def width(self) -> float:
        """xmax - xmin."""
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        """ymax - ymin."""
        return self.ymax - self.ymin

    @property
    def diameter(self) -> float:
        """Length of the diagonal."""
        return math.hypot(self.width, self.height)

    @property
    def center(self) -> Point:
        """Midpoint of the box."""
        return (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def contains(self, xi: Sequence[float]) -> bool:
        """Closed-box membership."""
        return self.xmin <= xi[0] <= self.xmax and self.ymin <= xi[1] <= self.ymax

    def overlaps(self, other: "Box") -> bool:
        """Whether the two closed boxes intersect."""
        return not (
            self.xmax < other.xmin or other.xmax < self.xmin or self.ymax < other.ymin or other.ymax < self.ymin
        )

    def split(self) -> List["Box"]:
        """Four quadrants in canonical order: SW, SE, NW, NE."""
        cx, cy = self.center
        return [
            Box(self.xmin, cx, self.ymin, cy),
            Box(cx, self.xmax, self.ymin, cy),
            Box(self.xmin, cx, cy, self.ymax),
            Box(cx, self.xmax, cy, self.ymax),
        ]

    def inflated(self, fraction: float) -> "Box":
        """Grow both half-widths by the given fraction about the center."""
        cx, cy = self.center
        hw = 0.5 * self.width * (1.0 + fraction)
        hh = 0.5 * self.height * (1.0 + fraction)
        return Box(cx - hw, cx + hw, cy - hh, cy + hh)

    def as_list(self) -> List[float]:
        """[xmin, xmax, ymin, ymax]."""
        return [self.xmin, self.xmax, self.ymin, self.ymax]


@dataclass(frozen=True)
class PathLoop:
    """Closed curve in parameter space: a circle or the boundary of a rectangle."""

    kind: str
    samples: int
    center: Point = (0.0, 0.0)
    radius: float = 1.0
    box: Optional[Box] = None

    def __post_init__(self):
        if self.kind not in ("circle", "rect"):
            raise ConfigError(f"unknown loop kind {self.kind!r}")
        if self.samples < 8:
            raise ConfigError(f"loop needs at least 8 samples, got {self.samples}")
        if self.kind == "circle" and not self.radius > 0:
            raise ConfigError(f"circle radius must be > 0, got {self.radius}")
        if self.kind == "rect" and self.box is None:
            raise ConfigError("rect loop needs a box")

    @classmethod
    def circle(cls, center: Sequence[float], radius: float, samples: int = 256) -> "PathLoop":
        """Counterclockwise circle starting at angle 0."""
        return cls("circle", int(samples), (float(center[0]), float(center[1])), float(radius))

    @classmethod
    def rect(cls, box: Box, samples: int = 256) -> "PathLoop":
        """Counterclockwise boundary of box starting at (xmin, ymin)."""
        return cls("rect", int(samples), box.center, 0.0, box)

    def with_samples(self, samples: int) -> "PathLoop":
        """Same loop with another sample count."""
        return replace(self, samples=int(samples))


@dataclass(frozen=True)
class SigmaSurface:
    """sigma_min, minimal singular gap and |det A| on a rectangular lattice (rows follow y)."""

    xs: np.ndarray
    ys: np.ndarray
    sigma_min: np.ndarray
    gap: np.ndarray
    absdet: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        """One row per node with columns x, y, sigma_min, gap, absdet."""
        X, Y = np.meshgrid(self.xs, self.ys)
        return pd.DataFrame(
            {
                "x": X.ravel(),
                "y": Y.ravel(),
                "sigma_min": self.sigma_min.ravel(),
                "gap": self.gap.ravel(),
                "absdet": self.absdet.ravel(),
            }
        )

    def argmin(self) -> Tuple[Point, float]:
        """Grid node with the smallest sigma_min and its value."""
        iy, ix = np.unravel_index(int(np.argmin(self.sigma_min)), self.sigma_min.shape)
        return (float(self.xs[ix]), float(self.ys[iy])), float(self.sigma_min[iy, ix])

    def argmin_cell(self) -> Box:
        """Lattice cell around the sigma_min argmin, clipped to the scanned box."""
        (x, y), _ = self.argmin()
        dx = float(self.xs[1] - self.xs[0])
        dy = float(self.ys[1] - self.ys[0])
        return Box(
            max(x - dx, float(self.xs[0])),
            min(x + dx, float(self.xs[-1])),
            max(y - dy, float(self.ys[0])),
            min(y + dy, float(self.ys[-1])),
        )


def _read_complex(value: Any, location: str) -> complex:
    if isinstance(value, bool):
        raise ParseError("expected [re, im] or a number", location)
    if isinstance(value, (int, float)):
        return complex(float(value), 0.0)
    if isinstance(value, list) and len(value) == 2 and all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        return complex(float(value[0]), float(value[1]))
    raise ParseError("expected [re, im] or a number", location)


def _read_int(doc: dict, key: str, location: str) -> int:
    if key not in doc:
        raise ParseError(f"missing key {key!r}", location)
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{key!r} must be an integer", f"{location}.{key}")
    return value


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} column {exc.colno}") from exc


def parse_family(text: str) -> MatrixFamily:
    """Read a family document {"n": int, "terms": [{"jx", "ky", "matrix"}]}."""
    doc = _load_json(text)
    if not isinstance(doc, dict):
        raise ParseError("family document must be an object")
    n = _read_int(doc, "n", "$")
    if n < 1:
        raise ParseError("n must be >= 1", "$.n")
    terms_doc = doc.get("terms")
    if not isinstance(terms_doc, list) or not terms_doc:
        raise ParseError("terms must be a non-empty list", "$.terms")

    terms = []
    seen = set()
    for t_idx, term in enumerate(terms_doc):
        where = f"$.terms[{t_idx}]"
        if not isinstance(term, dict):
            raise ParseError("term must be an object", where)
        jx = _read_int(term, "jx", where)
        ky = _read_int(term, "ky", where)
        if jx < 0 or ky < 0:
            raise ParseError("exponents must be >= 0", where)
        if (jx, ky) in seen:
            raise ParseError(f"duplicate term ({jx},{ky})", where)
        seen.add((jx, ky))
        rows = term.get("matrix")
        if not isinstance(rows, list) or len(rows) != n:
            raise ParseError(f"matrix must have {n} rows", f"{where}.matrix")
        matrix = np.empty((n, n), dtype=complex)
        for r, row in enumerate(rows):
            if not isinstance(row, list) or len(row) != n:
                raise ParseError(f"row must have {n} entries", f"{where}.matrix[{r}]")
            for c, entry in enumerate(row):
                matrix[r, c] = _read_complex(entry, f"{where}.matrix[{r}][{c}]")
        if not np.all(np.isfinite(matrix)):
            raise ParseError("matrix has non-finite entries", f"{where}.matrix")
        terms.append(FamilyTerm(jx, ky, matrix))
    return MatrixFamily(n, tuple(terms))


def serialize_family(family: MatrixFamily) -> str:
    """Write a family document; floats keep their exact binary value."""
    doc = {
        "n": family.n,
        "terms": [
            {
                "jx": term.jx,
                "ky": term.ky,
                "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in term.matrix],
            }
            for term in family.terms
        ],
    }
    return json.dumps(doc, indent=1)


def parse_loop(text: str) -> PathLoop:
    """Read a loop document (circle or rect)."""
    doc = _load_json(text)
    if not isinstance(doc, dict):
        raise ParseError("loop document must be an object")
    kind = doc.get("kind")
    samples = _read_int(doc, "samples", "$")
    try:
        if kind == "circle":
            center = doc.get("center")
            if not (isinstance(center, list) and len(center) == 2):
                raise ParseError("center must be [x, y]", "$.center")
            return PathLoop.circle([float(c) for c in center], float(doc.get("radius", math.nan)), samples)
        if kind == "rect":
            box = doc.get("box")
            if not (isinstance(box, list) and len(box) == 4):
                raise ParseError("box must be [xmin, xmax, ymin, ymax]", "$.box")
            return PathLoop.rect(Box(*[float(b) for b in box]), samples)
    except (TypeError, ConfigError) as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown loop kind {kind!r}", "$.kind")


def serialize_loop(loop: PathLoop) -> str:
    """Loop document accepted by parse_loop."""
    if loop.kind == "circle":
        doc = {"kind": "circle", "center": list(loop.center), "radius": loop.radius, "samples": loop.samples}
    else:
        doc = {"kind": "rect", "box": loop.box.as_list(), "samples": loop.samples}
    return json.dumps(doc)


def eval_family(family: MatrixFamily, xi: Sequence[float]) -> np.ndarray:
    """A(x, y)."""
    x, y = float(xi[0]), float(xi[1])
    A = np.zeros((family.n, family.n), dtype=complex)
    for term in family.terms:
        A += (x**term.jx) * (y**term.ky) * term.matrix
    return A


def eval_gradient(family: MatrixFamily, xi: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    """Partial derivatives (dA/dx, dA/dy)."""
    x, y = float(xi[0]), float(xi[1])
    Ax = np.zeros((family.n, family.n), dtype=complex)
    Ay = np.zeros((family.n, family.n), dtype=complex)
    for term in family.terms:
        if term.jx > 0:
            Ax += term.jx * (x ** (term.jx - 1)) * (y**term.ky) * term.matrix
        if term.ky > 0:
            Ay += term.ky * (x**term.jx) * (y ** (term.ky - 1)) * term.matrix
    return Ax, Ay


def eval_derivative(family: MatrixFamily, xi: Sequence[float], direction: Sequence[float]) -> np.ndarray:
    """Directional derivative of A at xi along the unit vector direction."""
    Ax, Ay = eval_gradient(family, xi)
    return float(direction[0]) * Ax + float(direction[1]) * Ay


def loop_point(loop: PathLoop, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Point gamma(t) and tangent d gamma/dt; t = 1 returns exactly the t = 0 values."""
    s = float(t) % 1.0
    if loop.kind == "circle":
        angle = 2.0 * math.pi * s
        cx, cy = loop.center
        r = loop.radius
        point = np.array([cx + r * math.cos(angle), cy + r * math.sin(angle)])
        tangent = 2.0 * math.pi * r * np.array([-math.sin(angle), math.cos(angle)])
        return point, tangent

    box = loop.box
    w, h = box.width, box.height
    perimeter = 2.0 * (w + h)
    arc = s * perimeter
    # Corners belong to the outgoing edge; traversal is counterclockwise from (xmin, ymin).
    if arc < w:
        point = np.array([box.xmin + arc, box.ymin])
        direction = np.array([1.0, 0.0])
    elif arc < w + h:
        point = np.array([box.xmax, box.ymin + (arc - w)])
        direction = np.array([0.0, 1.0])
    elif arc < 2.0 * w + h:
        point = np.array([box.xmax - (arc - w - h), box.ymax])
        direction = np.array([-1.0, 0.0])
    else:
        point = np.array([box.xmin, box.ymax - (arc - 2.0 * w - h)])
        direction = np.array([0.0, -1.0])
    return point, perimeter * direction


def grid_scan(family: MatrixFamily, box: Box, resolution: Union[int, Tuple[int, int]]) -> SigmaSurface:
    """Evaluate sigma_min, the minimal singular gap and |det A| on a lattice over box."""
    nx, ny = (resolution, resolution) if isinstance(resolution, int) else resolution
    if nx < 2 or ny < 2:
        raise ConfigError(f"grid resolution must be >= 2 per axis, got {(nx, ny)}")
    xs = np.linspace(box.xmin, box.xmax, nx)
    ys = np.linspace(box.ymin, box.ymax, ny)
    sigma_min = np.empty((ny, nx))
    gap = np.empty((ny, nx))
    absdet = np.empty((ny, nx))
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            A = eval_family(family, (x, y))
            triple = svd_point(A)
            sigma_min[iy, ix] = triple.sigma_min
            gap[iy, ix] = triple.gap
            absdet[iy, ix] = abs(det(A))
    logger.info("Scanned %dx%d grid, min sigma_min %.3e", nx, ny, float(sigma_min.min()))
    return SigmaSurface(xs, ys, sigma_min, gap, absdet)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    """Haar-distributed unitary matrix."""
    Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Q, R = scipy.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def manufactured_family(
    a: float, b: float, B: np.ndarray, C: np.ndarray, diag_rest: Optional[Sequence[float]] = None
) -> MatrixFamily:
    """Affine family B diag((x-a) - i(y-b), d_2, ..., d_n) C with its only rank loss at (a, b)."""
    n = B.shape[0]
    rest = list(diag_rest) if diag_rest is not None else [3.0 + k for k in range(n - 1)]
    if len(rest) != n - 1:
        raise ConfigError(f"need {n - 1} constant diagonal values, got {len(rest)}")
    E = np.zeros((n, n), dtype=complex)
    E[0, 0] = 1.0
    D0 = np.diag(np.array([complex(-a, b)] + [complex(d) for d in rest]))
    return MatrixFamily.from_terms(
        [
            (0, 0, B @ D0 @ C),
            (1, 0, B @ E @ C),
            (0, 1, -1j * (B @ E @ C)),
        ]
    )
