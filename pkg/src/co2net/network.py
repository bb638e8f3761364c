"""Five-compartment CO2 network, atmosphere balance and circularity metrics.

The network has three vertex compartments (digester, atmosphere, microalgae
cultivation) and two arc compartments (virtual ducts) carrying CO2 from the
digester to the atmosphere and from the atmosphere to the cultivation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction

from co2net.errors import NoCompensationError

log = logging.getLogger(__name__)

DIGESTER, ATMOSPHERE, MICROALGAE = 1, 2, 3


@dataclass(frozen=True)
class CompartmentId:
    k: int
    i: int
    j: int

    def __post_init__(self):
        if min(self.k, self.i, self.j) < 1:
            raise ValueError("compartment indices must be positive integers")

    @property
    def is_vertex(self) -> bool:
        return self.i == self.j

    @property
    def kind(self) -> str:
        return "vertex" if self.is_vertex else "arc"


@dataclass(frozen=True)
class VirtualDuct:
    """Geometry of an arc compartment. Carries metadata only (zero-length limit)."""

    H: float = 0.0
    A_face_source: float = 0.0
    A_face_sink: float = 0.0

    def __post_init__(self):
        if not self.H >= 0:
            raise ValueError("duct length H must be >= 0")


@dataclass(frozen=True)
class AtmosphereState:
    m2: float
    t: float


@dataclass(frozen=True)
class CircularityResult:
    lam: float
    net_flow: float
    delta: float


@dataclass(frozen=True)
class NetworkGraph:
    compartments: tuple[CompartmentId, ...]
    ducts: dict

    @property
    def vertices(self):
        return tuple(c for c in self.compartments if c.is_vertex)

    @property
    def arcs(self):
        return tuple(c for c in self.compartments if not c.is_vertex)

    def arc(self, i, j):
        for c in self.arcs:
            if (c.i, c.j) == (i, j):
                return c
        return None

    def has_arc(self, i, j) -> bool:
        return self.arc(i, j) is not None

    def edge_list(self) -> str:
        """Plain-text export, one ``k,i,j,kind`` line per compartment."""
        return "".join(f"{c.k},{c.i},{c.j},{c.kind}\n" for c in self.compartments)

    @classmethod
    def from_edge_list(cls, text: str) -> "NetworkGraph":
        comps = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            k, i, j, kind = line.split(",")
            c = CompartmentId(int(k), int(i), int(j))
            if c.kind != kind.strip():
                raise ValueError(f"kind mismatch on line {line!r}")
            comps.append(c)
        ids = [c.k for c in comps]
        if len(set(ids)) != len(ids):
            raise ValueError("compartment ids must be unique")
        return cls(tuple(comps), {c.k: VirtualDuct() for c in comps if not c.is_vertex})


def build_network(duct_faces=(0.0, 0.0)) -> NetworkGraph:
    """Digester -> atmosphere -> microalgae digraph.

    ``duct_faces`` are the digester and cultivation areas; in the zero-length
    duct limit the duct face areas equal the adjacent vertex areas.
    """
    a_digester, a_algae = duct_faces
    comps = (
        CompartmentId(1, DIGESTER, DIGESTER),
        CompartmentId(2, ATMOSPHERE, ATMOSPHERE),
        CompartmentId(3, MICROALGAE, MICROALGAE),
        CompartmentId(4, DIGESTER, ATMOSPHERE),
        CompartmentId(5, ATMOSPHERE, MICROALGAE),
    )
    ducts = {
        4: VirtualDuct(0.0, a_digester, a_digester),
        5: VirtualDuct(0.0, a_algae, a_algae),
    }
    return NetworkGraph(comps, ducts)


def _check_finite(**values):
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v!r}")


def atmosphere_rate(m12, m23, Vd, Vm):
    """Accumulation rate of atmospheric CO2 (mmol/d).

    Flows are per unit volume of their own compartment, so the source is
    scaled by the digester volume and the sink by the cultivation volume.
    """
    _check_finite(m12=m12, m23=m23, Vd=Vd, Vm=Vm)
    if Vd <= 0 or Vm < 0:
        raise ValueError("require Vd > 0 and Vm >= 0")
    return m12 * Vd - m23 * Vm


def circularity(net_flow, delta=1.0) -> CircularityResult:
    _check_finite(net_flow=net_flow, delta=delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if net_flow < 0:
        raise ValueError(
            f"negative net flow {net_flow!r}; clamp to 0 (net zero) before computing circularity"
        )
    return CircularityResult(lam=-net_flow * delta if net_flow else 0.0, net_flow=net_flow, delta=delta)


def clamped_circularity(net_flow, delta=1.0) -> CircularityResult:
    """Circularity with a sink-dominated net flow clamped to zero."""
    if net_flow < 0:
        log.warning("net flow %.6g < 0 clamped to 0 (sink exceeds source)", net_flow)
        net_flow = 0.0
    return circularity(net_flow, delta)


def compensation_volume(m12_ss, m23_ss, Vd=1.0):
    """Cultivation volume whose uptake cancels the digester emissions.

    The ratio is formed on the decimal values of the inputs so that
    ``compensation_volume(175, 0.28)`` is exactly 625.
    """
    _check_finite(m12_ss=m12_ss, m23_ss=m23_ss, Vd=Vd)
    if Vd <= 0:
        raise ValueError("Vd must be positive")
    if m23_ss <= 0:
        raise NoCompensationError(f"sink flow {m23_ss!r} <= 0, no finite volume compensates")
    ratio = Fraction(repr(float(m12_ss))) / Fraction(repr(float(m23_ss)))
    return float(ratio * Fraction(repr(float(Vd))))
