"""Periodic grid geometry on the unit flat 2-torus.

Nodes are indexed ``(i, j)`` with coordinates ``(i/n, j/n)``; the flat
node id is ``i * n + j`` so that ``f.ravel()`` lines up with node ids.
Displacements are measured in cells unless stated otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import LoopStructureError, ValidationError


@dataclass(frozen=True)
class TorusGrid:
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool) or self.n < 2:
            raise ValidationError(f"grid needs n >= 2 cells per side, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def num_nodes(self) -> int:
        return self.n * self.n

    def node_id(self, i: int, j: int) -> int:
        return (i % self.n) * self.n + (j % self.n)

    def node_ij(self, node: int) -> tuple[int, int]:
        return divmod(int(node), self.n)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x1, x2)`` arrays of shape (n, n), indexed ``[i, j]``."""
        ticks = np.arange(self.n) / self.n
        return np.meshgrid(ticks, ticks, indexing="ij")


@dataclass(frozen=True)
class CohomologyClass:
    """The class of the harmonic 1-form ``c1 dx1 + c2 dx2``."""

    c1: float
    c2: float

    def __post_init__(self):
        for name in ("c1", "c2"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValidationError(f"cohomology component {name} must be finite")
            object.__setattr__(self, name, value)

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.c1, self.c2])

    @property
    def is_trivial(self) -> bool:
        return self.c1 == 0.0 and self.c2 == 0.0

    def __iter__(self):
        return iter((self.c1, self.c2))


def as_class(c) -> CohomologyClass:
    if isinstance(c, CohomologyClass):
        return c
    c1, c2 = c
    return CohomologyClass(c1, c2)


@dataclass(frozen=True)
class VelocityStencil:
    """Integer offsets ``(a, b)`` with ``a^2 + b^2 <= radius^2``, zero included."""

    radius: int
    offsets: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValidationError(f"stencil radius must be an integer >= 1, got {self.radius!r}")
        r = int(self.radius)
        object.__setattr__(self, "radius", r)
        offs = [
            (a, b)
            for a in range(-r, r + 1)
            for b in range(-r, r + 1)
            if a * a + b * b <= r * r
        ]
        offs.sort(key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab[0], ab[1]))
        object.__setattr__(self, "offsets", tuple(offs))

    def __len__(self):
        return len(self.offsets)

    def index(self, offset: tuple[int, int]) -> int:
        try:
            return self.offsets.index((int(offset[0]), int(offset[1])))
        except ValueError:
            raise LoopStructureError(f"offset {tuple(offset)} not in stencil of radius {self.radius}") from None

    def as_array(self) -> np.ndarray:
        return np.array(self.offsets, dtype=np.int64)


# --- metric generators -----------------------------------------------------

@dataclass(frozen=True)
class FourierMode:
    """``amplitude * sin(2 pi (k1 x1 + k2 x2) + phase)`` (or ``cos``)."""

    k1: int
    k2: int
    amplitude: float
    phase: float = 0.0
    kind: str = "sin"

    def evaluate(self, x1, x2):
        theta = 2.0 * np.pi * (self.k1 * x1 + self.k2 * x2) + self.phase
        trig = np.sin if self.kind == "sin" else np.cos
        return self.amplitude * trig(theta)


@dataclass(frozen=True)
class PeriodicBump:
    """Gaussian ``amplitude * exp(-|x - center|^2 / (2 width^2))`` made periodic."""

    center: tuple[float, float]
    width: float
    amplitude: float

    def evaluate(self, x1, x2):
        # minimum-image displacement, then the 3x3 nearest translates;
        # omitted translates are >= 1.5 away (below 1e-12 for width <= 0.2)
        d1 = _wrap(x1 - self.center[0])
        d2 = _wrap(x2 - self.center[1])
        total = np.zeros(np.broadcast(d1, d2).shape)
        two_w2 = 2.0 * self.width * self.width
        for s1 in (-1.0, 0.0, 1.0):
            for s2 in (-1.0, 0.0, 1.0):
                total = total + np.exp(-((d1 + s1) ** 2 + (d2 + s2) ** 2) / two_w2)
        return self.amplitude * total


def _wrap(d):
    return d - np.round(d)


@dataclass(frozen=True)
class FieldSpec:
    """Symbolic description of a scalar field on the torus: a sum of terms.

    An empty spec is the zero field.
    """

    modes: tuple[FourierMode, ...] = ()
    bumps: tuple[PeriodicBump, ...] = ()

    @property
    def kind(self) -> str:
        if not self.modes and not self.bumps:
            return "zero"
        if self.modes and not self.bumps:
            return "fourier"
        if self.bumps and not self.modes:
            return "bumps"
        return "mixed"

    def validate(self):
        for m in self.modes:
            if m.kind not in ("sin", "cos"):
                raise ValidationError(f"fourier mode kind must be 'sin' or 'cos', got {m.kind!r}")
            if int(m.k1) != m.k1 or int(m.k2) != m.k2:
                raise ValidationError("fourier wave numbers must be integers")
            if not (math.isfinite(m.amplitude) and math.isfinite(m.phase)):
                raise ValidationError("fourier amplitude and phase must be finite")
        for b in self.bumps:
            if not all(math.isfinite(v) for v in (*b.center, b.width, b.amplitude)):
                raise ValidationError("bump parameters must be finite")
            if b.width <= 0:
                raise ValidationError(f"bump width must be > 0, got {b.width}")
        return self

    def sample(self, grid: TorusGrid) -> np.ndarray:
        self.validate()
        x1, x2 = grid.coordinates()
        values = np.zeros((grid.n, grid.n))
        for m in self.modes:
            values = values + m.evaluate(x1, x2)
        for b in self.bumps:
            values = values + b.evaluate(x1, x2)
        return values

    def to_dict(self) -> dict:
        out: dict = {}
        if self.modes:
            out["modes"] = [
                {"k1": m.k1, "k2": m.k2, "amplitude": m.amplitude, "phase": m.phase, "kind": m.kind}
                for m in self.modes
            ]
        if self.bumps:
            out["bumps"] = [
                {"center": list(b.center), "width": b.width, "amplitude": b.amplitude}
                for b in self.bumps
            ]
        return out

    @classmethod
    def from_dict(cls, data) -> "FieldSpec":
        if data is None or data == "zero":
            return cls()
        if not isinstance(data, dict):
            raise ValidationError(f"field spec must be 'zero' or a table, got {data!r}")
        modes = tuple(
            FourierMode(
                k1=int(m["k1"]),
                k2=int(m["k2"]),
                amplitude=float(m["amplitude"]),
                phase=float(m.get("phase", 0.0)),
                kind=str(m.get("kind", "sin")),
            )
            for m in data.get("modes", ())
        )
        bumps = tuple(
            PeriodicBump(
                center=(float(b["center"][0]), float(b["center"][1])),
                width=float(b["width"]),
                amplitude=float(b["amplitude"]),
            )
            for b in data.get("bumps", ())
        )
        return cls(modes=modes, bumps=bumps).validate()


def sine_rows(amplitude: float) -> FieldSpec:
    """``amplitude * sin(2 pi x2)``: a single well along the row x2 = 3/4."""
    return FieldSpec(modes=(FourierMode(0, 1, amplitude),))


def two_wells(amplitude: float) -> FieldSpec:
    """``amplitude * cos(4 pi x2)``: equal wells along x2 = 1/4 and x2 = 3/4."""
    return FieldSpec(modes=(FourierMode(0, 2, amplitude, kind="cos"),))


@dataclass(frozen=True, eq=False)
class ConformalMetric:
    """Conformal factor ``e^f`` times the flat metric, sampled at grid nodes."""

    grid: TorusGrid
    f: np.ndarray
    generators: FieldSpec = FieldSpec()

    def __post_init__(self):
        f = np.array(self.f, dtype=float, copy=True)
        if f.shape != (self.grid.n, self.grid.n):
            raise ValidationError(f"f has shape {f.shape}, expected {(self.grid.n, self.grid.n)}")
        if not np.all(np.isfinite(f)):
            raise ValidationError("conformal log-factor must be finite everywhere")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)

    @property
    def is_flat(self) -> bool:
        return bool(np.all(self.f == self.f.flat[0]))

    def factor(self) -> np.ndarray:
        return np.exp(self.f)


def build_metric(grid: TorusGrid, spec: FieldSpec | dict | str | None = None) -> ConformalMetric:
    if not isinstance(spec, FieldSpec):
        spec = FieldSpec.from_dict(spec)
    return ConformalMetric(grid, spec.sample(grid), spec)


# --- loops ---------------------------------------------------------------

@dataclass(frozen=True)
class DiscreteLoop:
    """A closed lattice path: ``nodes[k] + displacements[k] == nodes[k+1]`` mod n."""

    grid: TorusGrid
    nodes: tuple[tuple[int, int], ...]
    displacements: tuple[tuple[int, int], ...]
    timestep: float

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple((int(i) % self.grid.n, int(j) % self.grid.n) for i, j in self.nodes))
        object.__setattr__(self, "displacements", tuple((int(a), int(b)) for a, b in self.displacements))
        self.check()

    def check(self):
        n = self.grid.n
        if len(self.nodes) == 0 or len(self.nodes) != len(self.displacements):
            raise LoopStructureError("loop needs one displacement per node and at least one step")
        if not (self.timestep > 0 and math.isfinite(self.timestep)):
            raise LoopStructureError(f"loop timestep must be positive, got {self.timestep}")
        m = len(self.nodes)
        for k, ((i, j), (a, b)) in enumerate(zip(self.nodes, self.displacements)):
            ni, nj = self.nodes[(k + 1) % m]
            if (i + a - ni) % n or (j + b - nj) % n:
                raise LoopStructureError(
                    f"step {k}: node {(i, j)} + {(a, b)} does not reach {(ni, nj)} mod {n}"
                )
        sa = sum(a for a, _ in self.displacements)
        sb = sum(b for _, b in self.displacements)
        if sa % n or sb % n:
            raise LoopStructureError("displacements do not close up to a lattice translate")

    def __len__(self):
        return len(self.nodes)

    @property
    def period(self) -> float:
        return self.timestep * len(self.nodes)

    def reversed(self) -> "DiscreteLoop":
        m = len(self.nodes)
        nodes = tuple(self.nodes[(-k) % m] for k in range(m))
        disps = tuple((-a, -b) for a, b in reversed(self.displacements))
        return DiscreteLoop(self.grid, nodes, disps, self.timestep)

    def concatenate(self, other: "DiscreteLoop") -> "DiscreteLoop":
        """Splice ``other`` in at this loop's base node (they must share it)."""
        if other.grid != self.grid or other.timestep != self.timestep:
            raise LoopStructureError("concatenated loops need the same grid and timestep")
        if other.nodes[0] != self.nodes[0]:
            raise LoopStructureError("concatenated loops must start at the same node")
        return DiscreteLoop(
            self.grid,
            self.nodes + other.nodes,
            self.displacements + other.displacements,
            self.timestep,
        )

    @classmethod
    def from_steps(cls, grid: TorusGrid, start, steps: Sequence[tuple[int, int]], timestep=None) -> "DiscreteLoop":
        i, j = start
        nodes = []
        for a, b in steps:
            nodes.append((i, j))
            i, j = i + a, j + b
        return cls(grid, tuple(nodes), tuple(steps), grid.spacing if timestep is None else timestep)


def homology_class(loop: DiscreteLoop) -> tuple[int, int]:
    loop.check()
    n = loop.grid.n
    sa = sum(a for a, _ in loop.displacements)
    sb = sum(b for _, b in loop.displacements)
    return sa // n, sb // n


def one_form_pairing(c, loop: DiscreteLoop) -> float:
    c = as_class(c)
    z1, z2 = homology_class(loop)
    return c.c1 * z1 + c.c2 * z2


def default_class_grid(directions: int = 16, magnitudes: Iterable[float] = (0.5, 1.0, 2.0),
                       include_zero: bool = True) -> list[CohomologyClass]:
    classes = [CohomologyClass(0.0, 0.0)] if include_zero else []
    for r in magnitudes:
        for k in range(directions):
            theta = 2.0 * np.pi * k / directions
            classes.append(CohomologyClass(r * math.cos(theta), r * math.sin(theta)))
    return classes
