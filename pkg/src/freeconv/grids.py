"""Grid specifications for spectral-plane evaluation and histogramming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridError


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid in either cartesian (x, y) or polar (r, phi) coordinates.

    ranges holds ((lo0, hi0), (lo1, hi1)) for the two axes and resolution the
    per-axis point counts.  Cartesian nodes are z = x + i y; polar nodes are
    z = r e^{i phi} with r > 0, so polar grids can never contain the origin.
    """

    kind: str
    ranges: tuple
    resolution: tuple

    def __post_init__(self):
        problems = []
        if self.kind not in ("cartesian", "polar"):
            problems.append(f"grid kind must be 'cartesian' or 'polar', got {self.kind!r}")
        if len(self.ranges) != 2 or any(len(r) != 2 for r in self.ranges):
            problems.append("ranges must be ((lo, hi), (lo, hi))")
        else:
            for axis, (lo, hi) in enumerate(self.ranges):
                if not hi > lo:
                    problems.append(f"axis {axis}: range ({lo}, {hi}) is empty")
            if self.kind == "polar" and self.ranges[0][0] <= 0:
                problems.append("polar grids need r > 0")
        if len(self.resolution) != 2 or any(int(n) < 3 for n in self.resolution):
            problems.append("need at least 3 points per axis for finite differences")
        if problems:
            raise GridError("; ".join(problems))
        # normalize to plain tuples of floats/ints so equality is structural
        object.__setattr__(self, "ranges", tuple((float(lo), float(hi)) for lo, hi in self.ranges))
        object.__setattr__(self, "resolution", tuple(int(n) for n in self.resolution))

    def axes(self):
        """The two 1-d coordinate arrays (x, y) or (r, phi)."""
        (lo0, hi0), (lo1, hi1) = self.ranges
        n0, n1 = self.resolution
        return np.linspace(lo0, hi0, n0), np.linspace(lo1, hi1, n1)

    def points(self):
        """Complex nodes as a (n0, n1) array; axis 0 is x or r, axis 1 is y or phi."""
        u, v = self.axes()
        if self.kind == "cartesian":
            return u[:, None] + 1j * v[None, :]
        return u[:, None] * np.exp(1j * v[None, :])

    def steps(self):
        (lo0, hi0), (lo1, hi1) = self.ranges
        n0, n1 = self.resolution
        return (hi0 - lo0) / (n0 - 1), (hi1 - lo1) / (n1 - 1)

    def contains_origin(self) -> bool:
        if self.kind == "polar":
            return False
        return bool(np.any(self.points() == 0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ranges": [list(r) for r in self.ranges],
                "resolution": list(self.resolution)}

    @staticmethod
    def from_dict(d: dict) -> "GridSpec":
        try:
            return GridSpec(kind=d["kind"],
                            ranges=tuple(tuple(r) for r in d["ranges"]),
                            resolution=tuple(d["resolution"]))
        except KeyError as exc:
            raise GridError(f"grid spec missing key {exc}") from exc
