"""Network data model, file loading, box supports, and DC flow maps.

Networks are described by a JSON file with top-level keys ``buses``,
``lines`` (from, to, reactance, f_max), ``generators`` (bus, p_min, p_max,
c_E, c_R, c_A), ``loads`` (bus, d), ``resources`` (bus, u, u_min, u_max,
kappa) and ``base_mva``. Power quantities are per-unit on base_mva, costs
in currency per per-unit.

Flow maps are injection shift factor matrices from the DC approximation:
B_G (lines x generators), B_W (lines x resources) and B_B (lines x buses)
map the respective injections to line flows. The reference bus only fixes
the representation; flows from balanced injection patterns do not depend
on it. When the file does not name a ``slack_bus``, the bus of the largest
generator is used.
"""

from __future__ import annotations

import importlib.resources
import json
from dataclasses import dataclass, field

import numpy as np

from .dro_core import BoxSupport
from .errors import InputError, TopologyError


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    f_max: float


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    c_E: float
    c_R: float
    c_A: float


@dataclass(frozen=True)
class Resource:
    """Uncertain injection with forecast u and capacity window [u_min, u_max]."""

    bus: int
    u: float
    u_min: float
    u_max: float
    kappa: float


@dataclass
class Network:
    buses: list[int]
    lines: list[Line]
    generators: list[Generator]
    loads: dict[int, float]
    resources: list[Resource]
    base_mva: float = 100.0
    slack_bus: int | None = None

    def __post_init__(self):
        bus_set = set(self.buses)
        if len(bus_set) != len(self.buses):
            raise InputError("duplicate bus ids")
        for ln in self.lines:
            if ln.from_bus not in bus_set or ln.to_bus not in bus_set:
                raise InputError(f"line {ln} references unknown bus")
            if ln.reactance <= 0:
                raise InputError("line reactance must be > 0")
            if ln.f_max <= 0:
                raise InputError("line f_max must be > 0")
        for g in self.generators:
            if g.bus not in bus_set:
                raise InputError(f"generator {g} references unknown bus")
            if g.p_min > g.p_max:
                raise InputError("generator has p_min > p_max")
        for r in self.resources:
            if r.bus not in bus_set:
                raise InputError(f"resource {r} references unknown bus")
            if not (r.u_min <= r.u <= r.u_max):
                raise InputError("resource forecast outside [u_min, u_max]")
            if not (0.0 <= r.kappa <= 1.0):
                raise InputError("resource kappa must lie in [0, 1]")
        for bus in self.loads:
            if bus not in bus_set:
                raise InputError(f"load references unknown bus {bus}")
        if self.slack_bus is None:
            self.slack_bus = self._largest_generator_bus()
        elif self.slack_bus not in bus_set:
            raise InputError(f"slack bus {self.slack_bus} not in bus list")

    def _largest_generator_bus(self) -> int:
        if not self.generators:
            return self.buses[0]
        return max(self.generators, key=lambda g: g.p_max).bus

    @property
    def num_buses(self) -> int:
        return len(self.buses)

    @property
    def num_lines(self) -> int:
        return len(self.lines)

    @property
    def num_generators(self) -> int:
        return len(self.generators)

    @property
    def num_resources(self) -> int:
        return len(self.resources)

    def load_vector(self) -> np.ndarray:
        return np.array([self.loads.get(b, 0.0) for b in self.buses])

    def forecast_vector(self) -> np.ndarray:
        return np.array([r.u for r in self.resources])


def bundled_network(name: str = "case5") -> Network:
    """Load one of the network files shipped inside the package."""
    ref = importlib.resources.files("msdro_opf") / "data" / f"{name}.json"
    if not ref.is_file():
        raise InputError(f"no bundled network named {name!r}")
    with importlib.resources.as_file(ref) as path:
        return load_network(path)


def load_network(path) -> Network:
    """Read a network JSON file into a Network."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from None
    try:
        lines = [Line(int(e["from"]), int(e["to"]), float(e["reactance"]),
                      float(e["f_max"])) for e in raw["lines"]]
        gens = [Generator(int(e["bus"]), float(e["p_min"]), float(e["p_max"]),
                          float(e["c_E"]), float(e["c_R"]), float(e["c_A"]))
                for e in raw["generators"]]
        loads = {int(e["bus"]): float(e["d"]) for e in raw["loads"]}
        resources = [Resource(int(e["bus"]), float(e["u"]), float(e["u_min"]),
                              float(e["u_max"]), float(e["kappa"]))
                     for e in raw["resources"]]
        return Network(
            buses=[int(b) for b in raw["buses"]],
            lines=lines,
            generators=gens,
            loads=loads,
            resources=resources,
            base_mva=float(raw.get("base_mva", 100.0)),
            slack_bus=int(raw["slack_bus"]) if "slack_bus" in raw else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: malformed network schema ({exc})") from None


def build_support(resource: Resource) -> BoxSupport:
    """Forecast-error interval [kappa (u_min - u), kappa (u_max - u)]."""
    if not (resource.u_min <= resource.u <= resource.u_max):
        raise InputError("resource forecast outside [u_min, u_max]")
    lo = resource.kappa * (resource.u_min - resource.u)
    up = resource.kappa * (resource.u_max - resource.u)
    return BoxSupport([lo], [up])


def build_joint_support(network: Network) -> BoxSupport:
    """Box support over all uncertain resources of the network."""
    if not network.resources:
        return BoxSupport(np.zeros(0), np.zeros(0))
    lows = [build_support(r).lower[0] for r in network.resources]
    ups = [build_support(r).upper[0] for r in network.resources]
    return BoxSupport(lows, ups)


def compute_flow_maps(network: Network,
                      slack_bus: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Injection shift factor matrices (B_G, B_W, B_B) for the DC model.

    Line flow = B_G p + B_W u - B_B d for generator injections p, resource
    injections u and loads d. Raises TopologyError on a disconnected graph.
    """
    if slack_bus is None:
        slack_bus = network.slack_bus
    buses = network.buses
    v = network.num_buses
    n_lines = network.num_lines
    bus_pos = {b: i for i, b in enumerate(buses)}
    if slack_bus not in bus_pos:
        raise InputError(f"slack bus {slack_bus} not in network")

    _check_connected(network, bus_pos)

    b_line = np.array([1.0 / ln.reactance for ln in network.lines])
    # Branch susceptance matrix (lines x buses) and bus susceptance matrix.
    bf = np.zeros((n_lines, v))
    for idx, ln in enumerate(network.lines):
        bf[idx, bus_pos[ln.from_bus]] = b_line[idx]
        bf[idx, bus_pos[ln.to_bus]] = -b_line[idx]
    bbus = np.zeros((v, v))
    for idx, ln in enumerate(network.lines):
        f, t = bus_pos[ln.from_bus], bus_pos[ln.to_bus]
        bbus[f, f] += b_line[idx]
        bbus[t, t] += b_line[idx]
        bbus[f, t] -= b_line[idx]
        bbus[t, f] -= b_line[idx]

    keep = [i for i in range(v) if i != bus_pos[slack_bus]]
    ptdf = np.zeros((n_lines, v))
    ptdf[:, keep] = bf[:, keep] @ np.linalg.inv(bbus[np.ix_(keep, keep)])

    b_g = ptdf[:, [bus_pos[g.bus] for g in network.generators]] \
        if network.generators else np.zeros((n_lines, 0))
    b_w = ptdf[:, [bus_pos[r.bus] for r in network.resources]] \
        if network.resources else np.zeros((n_lines, 0))
    return b_g, b_w, ptdf


def _check_connected(network: Network, bus_pos: dict) -> None:
    if network.num_buses == 0:
        raise TopologyError("network has no buses")
    adjacency: dict[int, set[int]] = {i: set() for i in range(network.num_buses)}
    for ln in network.lines:
        f, t = bus_pos[ln.from_bus], bus_pos[ln.to_bus]
        adjacency[f].add(t)
        adjacency[t].add(f)
    seen = {0}
    stack = [0]
    while stack:
        node = stack.pop()
        for nxt in adjacency[node]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != network.num_buses:
        missing = [network.buses[i] for i in range(network.num_buses) if i not in seen]
        raise TopologyError(f"network is disconnected; unreachable buses {missing}")
