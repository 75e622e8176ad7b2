"""
Deterministic test sets with exact weights.

snowflake    flat snowflake curves in R^2 (middle-bump replacement rule)
mobius       thin half-twisted strip around the unit circle in R^3
annulus      its untwisted (flat) counterpart
graph        graphs z = F(x) over a coordinate plane with prescribed oscillation
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from src.beta.cloud import PointCloud
from src.geom.primitives import orthonormalize
from src.shared.errors import SchemaError
from src.shared.jsonio import require

log = logging.getLogger(__name__)

MAX_ANGLE = 0.3
MAX_STRIP_WIDTH = 1e-2


# ── Snowflake ───────────────────────────────────────────────

@dataclass(frozen=True)
class SnowflakeSpec:
    """`angles[k]` is the bump angle of generation k + 1."""
    generations: int
    angles: tuple[float, ...]
    start: tuple[float, float] = (0.0, 0.0)
    end: tuple[float, float] = (1.0, 0.0)
    max_spacing: float | None = None

    def __post_init__(self):
        if self.generations < 0:
            raise SchemaError("generations must be >= 0", path="generations")
        if len(self.angles) != self.generations:
            raise SchemaError(f"expected {self.generations} angles, got {len(self.angles)}", path="angles")
        for k, alpha in enumerate(self.angles):
            if not 0.0 <= alpha <= MAX_ANGLE:
                raise SchemaError(f"angle {alpha} outside [0, {MAX_ANGLE}]", path=f"angles[{k}]")
        if len(self.start) != 2 or len(self.end) != 2:
            raise SchemaError("endpoints must be points of R^2", path="start")
        if np.allclose(self.start, self.end):
            raise SchemaError("start and end coincide", path="end")
        if self.max_spacing is not None and not self.max_spacing > 0:
            raise SchemaError("max_spacing must be positive", path="max_spacing")

    @classmethod
    def constant(cls, generations: int, alpha: float, **kwargs) -> "SnowflakeSpec":
        return cls(generations=generations, angles=tuple([alpha] * generations), **kwargs)

    @classmethod
    def summable(cls, generations: int, alpha: float, ratio: float = 0.5, **kwargs) -> "SnowflakeSpec":
        """alpha_k = alpha * ratio^k for k = 0..K-1."""
        return cls(generations=generations, angles=tuple(alpha * ratio**k for k in range(generations)), **kwargs)

    def closed_form_length(self) -> float:
        chord = float(np.linalg.norm(np.subtract(self.end, self.start)))
        return chord * float(np.prod([0.5 + 0.5 / np.cos(a) for a in self.angles]))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = "snowflake"
        return data


def snowflake_vertices(spec: SnowflakeSpec) -> tuple[np.ndarray, np.ndarray]:
    """
    Polyline vertices after K generations and, per final edge, the ledger of
    bump angles along its ancestry (0 for flat quarters, +-alpha_k for the
    sloped ones).
    """
    vertices = np.array([spec.start, spec.end], dtype=float)
    ledger = np.zeros((1, 0))
    for alpha in spec.angles:
        a, b = vertices[:-1], vertices[1:]
        e = b - a
        left = np.stack([-e[:, 1], e[:, 0]], axis=1)
        children = np.stack(
            [a, a + 0.25 * e, a + 0.5 * e + 0.25 * np.tan(alpha) * left, a + 0.75 * e],
            axis=1,
        ).reshape(-1, 2)
        vertices = np.vstack([children, vertices[-1:]])
        ledger = np.hstack([
            np.repeat(ledger, 4, axis=0),
            np.tile([0.0, alpha, -alpha, 0.0], len(e))[:, None],
        ])
    return vertices, ledger


def snowflake(spec: SnowflakeSpec) -> PointCloud:
    """
    Samples at the midpoints of the final edges (or of equal pieces no longer
    than max_spacing), weighted by exact arc length.
    """
    vertices, ledger = snowflake_vertices(spec)
    a, b = vertices[:-1], vertices[1:]
    lengths = np.linalg.norm(b - a, axis=1)
    pieces = np.ones(len(a), dtype=int)
    if spec.max_spacing is not None:
        pieces = np.maximum(1, np.ceil(lengths / spec.max_spacing).astype(int))
    edge = np.repeat(np.arange(len(a)), pieces)
    offsets = np.concatenate([(np.arange(p) + 0.5) / p for p in pieces])
    directions = (b - a) / lengths[:, None]
    points = a[edge] + offsets[:, None] * (b - a)[edge]
    weights = (lengths / pieces)[edge]
    tangents = directions[edge][:, None, :]
    normals = np.stack([-directions[edge, 1], directions[edge, 0]], axis=1)
    log.info("Snowflake: %d generations, %d edges, %d samples", spec.generations, len(a), len(points))
    return PointCloud(
        points=points,
        weights=weights,
        intrinsic_dim=1,
        normals=normals,
        tangents=tangents,
        attributes={
            "angle_ledger": ledger[edge].tolist(),
            "angle_square_sum": (ledger[edge] ** 2).sum(axis=1).tolist(),
        },
    )


def chord_arc_ratio(vertices, block: int = 512) -> float:
    """max over vertex pairs of arc length / chord length along the polyline."""
    vertices = np.asarray(vertices, dtype=float)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(vertices, axis=0), axis=1))])
    worst = 1.0
    for start in range(0, len(vertices), block):
        rows = slice(start, start + block)
        chords = np.linalg.norm(vertices[rows, None, :] - vertices[None, :, :], axis=2)
        arcs = np.abs(arc[rows, None] - arc[None, :])
        valid = chords > 0.0
        if np.any(valid):
            worst = max(worst, float((arcs[valid] / chords[valid]).max()))
    return worst


# ── Strips ──────────────────────────────────────────────────

@dataclass(frozen=True)
class MobiusSpec:
    tau: float = 1e-3
    n_angular: int = 2000
    n_transverse: int = 3
    twisted: bool = True

    def __post_init__(self):
        if not 0.0 < self.tau <= MAX_STRIP_WIDTH:
            raise SchemaError(f"strip half width must lie in (0, {MAX_STRIP_WIDTH}]", path="tau")
        if self.n_angular < 3 or self.n_transverse < 1:
            raise SchemaError("need n_angular >= 3 and n_transverse >= 1", path="n_angular")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = "mobius" if self.twisted else "annulus"
        return data


def mobius_chart(phi, s, twisted: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Point, d/dphi and d/ds of the strip chart; the untwisted chart is the flat annulus."""
    phi = np.asarray(phi, dtype=float)
    s = np.asarray(s, dtype=float)
    radial = np.stack([np.cos(phi), np.sin(phi), np.zeros_like(phi)], axis=-1)
    around = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    up = np.array([0.0, 0.0, 1.0])
    if not twisted:
        point = (1.0 + s)[..., None] * radial
        return point, (1.0 + s)[..., None] * around, radial
    c, sn = np.cos(0.5 * phi), np.sin(0.5 * phi)
    point = (1.0 + s * c)[..., None] * radial + (s * sn)[..., None] * up
    d_phi = (-0.5 * s * sn)[..., None] * radial + (1.0 + s * c)[..., None] * around + (0.5 * s * c)[..., None] * up
    d_s = c[..., None] * radial + sn[..., None] * up
    return point, d_phi, d_s


def mobius(spec: MobiusSpec) -> PointCloud:
    """Cell-centered chart samples with exact tangent frames and area weights."""
    phi = 2.0 * np.pi * (np.arange(spec.n_angular) + 0.5) / spec.n_angular
    s = spec.tau * (-1.0 + (2.0 * np.arange(spec.n_transverse) + 1.0) / spec.n_transverse)
    PHI, S = (grid.reshape(-1) for grid in np.meshgrid(phi, s, indexing="ij"))
    points, d_phi, d_s = mobius_chart(PHI, S, twisted=spec.twisted)
    cross = np.cross(d_phi, d_s)
    area = np.linalg.norm(cross, axis=1)
    cell = (2.0 * np.pi / spec.n_angular) * (2.0 * spec.tau / spec.n_transverse)
    tangents = np.stack([orthonormalize(np.stack([u, v])) for u, v in zip(d_phi, d_s)])
    return PointCloud(
        points=points,
        weights=area * cell,
        intrinsic_dim=2,
        normals=cross / area[:, None],
        tangents=tangents,
    )


def annulus_strip(tau: float = 1e-3, untwisted: bool = True, n_angular: int = 2000, n_transverse: int = 3) -> PointCloud:
    """The orientable foil to `mobius`, sampled the same way."""
    return mobius(MobiusSpec(tau=tau, n_angular=n_angular, n_transverse=n_transverse, twisted=not untwisted))


# ── Graphs ──────────────────────────────────────────────────

@dataclass(frozen=True)
class GraphSpec:
    """z = sum_i a_i sin(2 pi x_1 / lambda_i) over [-half_width, half_width]^d."""
    d: int = 1
    amplitudes: tuple[float, ...] = ()
    wavelengths: tuple[float, ...] = ()
    half_width: float = 1.0
    pitch: float = 0.01

    def __post_init__(self):
        if self.d not in (1, 2):
            raise SchemaError("graph sets support d in {1, 2}", path="d")
        if len(self.amplitudes) != len(self.wavelengths):
            raise SchemaError("one wavelength per amplitude", path="wavelengths")
        if any(w <= 0 for w in self.wavelengths):
            raise SchemaError("wavelengths must be positive", path="wavelengths")
        if not 0 < self.pitch < self.half_width:
            raise SchemaError("pitch must lie in (0, half_width)", path="pitch")

    def height(self, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """F and dF/dx_1."""
        value = np.zeros_like(x1)
        slope = np.zeros_like(x1)
        for a, lam in zip(self.amplitudes, self.wavelengths):
            omega = 2.0 * np.pi / lam
            value += a * np.sin(omega * x1)
            slope += a * omega * np.cos(omega * x1)
        return value, slope

    def to_dict(self) -> dict:
        data = asdict(self)
        data["kind"] = "graph"
        return data


def graph_set(spec: GraphSpec) -> PointCloud:
    n = spec.d + 1
    ticks = np.arange(-spec.half_width, spec.half_width + 0.5 * spec.pitch, spec.pitch)
    base = np.stack(np.meshgrid(*([ticks] * spec.d), indexing="ij"), axis=-1).reshape(-1, spec.d)
    value, slope = spec.height(base[:, 0])
    points = np.hstack([base, value[:, None]])
    frames = np.zeros((len(points), spec.d, n))
    for i in range(spec.d):
        frames[:, i, i] = 1.0
    frames[:, 0, n - 1] = slope
    tangents = np.stack([orthonormalize(frame) for frame in frames])
    weights = spec.pitch**spec.d * np.sqrt(1.0 + slope**2)
    return PointCloud(points=points, weights=weights, intrinsic_dim=spec.d, tangents=tangents)


# ── Spec files ──────────────────────────────────────────────

GeneratorSpec = Union[SnowflakeSpec, MobiusSpec, GraphSpec]


def _floats(values, where: str) -> tuple[float, ...]:
    if not isinstance(values, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise SchemaError("expected a list of numbers", path=where)
    return tuple(float(v) for v in values)


def spec_from_dict(data: dict, path: str = "spec") -> GeneratorSpec:
    """Parse a generator spec document; every problem is a SchemaError naming the field."""
    kind = require(data, "kind", "str", path)
    if kind == "snowflake":
        generations = require(data, "generations", "int", path)
        if "angles" in data:
            angles = _floats(data["angles"], f"{path}.angles")
        else:
            alpha = float(require(data, "alpha", "number", path))
            decay = float(require(data, "decay", "number", path, default=1.0))
            angles = tuple(alpha * decay**k for k in range(generations))
        spacing = require(data, "max_spacing", "number", path, default=None)
        return SnowflakeSpec(
            generations=generations,
            angles=angles,
            start=_floats(require(data, "start", "list", path, default=[0.0, 0.0]), f"{path}.start"),
            end=_floats(require(data, "end", "list", path, default=[1.0, 0.0]), f"{path}.end"),
            max_spacing=None if spacing is None else float(spacing),
        )
    if kind in ("mobius", "annulus"):
        return MobiusSpec(
            tau=float(require(data, "tau", "number", path, default=1e-3)),
            n_angular=require(data, "n_angular", "int", path, default=2000),
            n_transverse=require(data, "n_transverse", "int", path, default=3),
            twisted=kind == "mobius",
        )
    if kind == "graph":
        return GraphSpec(
            d=require(data, "d", "int", path, default=1),
            amplitudes=_floats(require(data, "amplitudes", "list", path, default=[]), f"{path}.amplitudes"),
            wavelengths=_floats(require(data, "wavelengths", "list", path, default=[]), f"{path}.wavelengths"),
            half_width=float(require(data, "half_width", "number", path, default=1.0)),
            pitch=float(require(data, "pitch", "number", path, default=0.01)),
        )
    raise SchemaError(f"unknown generator kind {kind!r}", path=f"{path}.kind")


def generate(spec: GeneratorSpec) -> PointCloud:
    if isinstance(spec, SnowflakeSpec):
        return snowflake(spec)
    if isinstance(spec, MobiusSpec):
        return mobius(spec)
    return graph_set(spec)
