"""MATPOWER case ingestion and result-document serialization.

Parses ``.m`` case files (bus/gen/branch/gencost tables) into an immutable
per-unit :class:`Network`, and reads/writes the versioned path documents
produced by the sequential driver.  All electrical quantities are stored in
per-unit on the system MVA base; cost polynomials are stored in per-unit
power so ``cost(p_pu)`` returns the original currency/h value.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CaseParseError, CaseValidationError, UnsupportedCostError

# Angle limits substituted when the file carries none (0 or +/-360 deg).
DEFAULT_ANGLE_LIMIT = math.pi / 3.0

PATH_SCHEMA_VERSION = 1


class BusKind(enum.Enum):
    PQ = "pq"
    PV = "pv"
    SLACK = "slack"


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_load: float
    q_load: float
    v_min: float
    v_max: float
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    v_setpoint: float
    # cost polynomial c2*p^2 + c1*p + c0 with p in per-unit
    cost: tuple[float, float, float] = (0.0, 1.0, 0.0)
    p_start: float = 0.0

    def cost_value(self, p: float) -> float:
        c2, c1, c0 = self.cost
        return c2 * p * p + c1 * p + c0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    y: complex              # series admittance 1/(r + jx)
    b_charge: float = 0.0   # total line charging susceptance
    tap: float = 1.0
    shift: float = 0.0      # radians
    s_max: float | None = None
    phi_min: float = -DEFAULT_ANGLE_LIMIT
    phi_max: float = DEFAULT_ANGLE_LIMIT


@dataclass(frozen=True)
class Network:
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    branches: tuple[Branch, ...]
    base_mva: float
    name: str = "network"

    # derived index maps, filled in __post_init__
    bus_index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(
            self, "bus_index", {b.id: i for i, b in enumerate(self.buses)}
        )

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    def buses_of_kind(self, kind: BusKind) -> list[int]:
        """Positional indices of buses with the given kind."""
        return [i for i, b in enumerate(self.buses) if b.kind == kind]

    @property
    def slack(self) -> int:
        """Positional index of the slack bus."""
        return self.buses_of_kind(BusKind.SLACK)[0]

    def generators_at(self, bus_pos: int) -> list[int]:
        bid = self.buses[bus_pos].id
        return [i for i, g in enumerate(self.generators) if g.bus == bid]

    def total_cost(self, p_g: np.ndarray) -> float:
        """Generation cost of a per-generator active-power vector (p.u.)."""
        return float(sum(g.cost_value(p) for g, p in zip(self.generators, p_g)))


# ---------------------------------------------------------------------------
# MATPOWER parsing
# ---------------------------------------------------------------------------

_MATRIX_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[", re.MULTILINE)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^\[;]+);")


def _strip_comment(line: str) -> str:
    pos = line.find("%")
    return line if pos < 0 else line[:pos]


def _read_tables(text: str) -> tuple[dict, dict]:
    """Extract scalar fields and numeric tables from a case file."""
    scalars = {}
    for m in _SCALAR_RE.finditer(text):
        name, raw = m.group(1), m.group(2).strip().strip("'\"")
        try:
            scalars[name] = float(raw)
        except ValueError:
            scalars[name] = raw

    tables = {}
    for m in _MATRIX_RE.finditer(text):
        name = m.group(1)
        start_line = text.count("\n", 0, m.end()) + 1
        body = text[m.end():]
        end = body.find("]")
        if end < 0:
            raise CaseParseError(f"unterminated table mpc.{name}", line=start_line)
        rows = []
        for off, line in enumerate(body[:end].split("\n")):
            line = _strip_comment(line).replace(";", " ").strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split()])
            except ValueError:
                raise CaseParseError(
                    f"malformed row in mpc.{name}: {line!r}",
                    line=start_line + off,
                ) from None
        if rows:
            width = len(rows[0])
            if any(len(r) < width for r in rows):
                raise CaseParseError(f"ragged rows in mpc.{name}", line=start_line)
        tables[name] = rows
    return scalars, tables


def _angle_limits(angmin_deg: float, angmax_deg: float) -> tuple[float, float]:
    """File angle limits in degrees -> usable radian bounds."""
    if angmin_deg == 0.0 and angmax_deg == 0.0:
        return -DEFAULT_ANGLE_LIMIT, DEFAULT_ANGLE_LIMIT
    if angmin_deg <= -360.0 or angmax_deg >= 360.0:
        return -DEFAULT_ANGLE_LIMIT, DEFAULT_ANGLE_LIMIT
    lo, hi = math.radians(angmin_deg), math.radians(angmax_deg)
    if not (-math.pi <= lo <= 0.0 <= hi <= math.pi):
        raise CaseValidationError(
            f"angle limits [{angmin_deg}, {angmax_deg}] deg must bracket zero "
            "within +/-180"
        )
    return lo, hi


def parse_case(text: str, name: str = "network") -> Network:
    """Parse MATPOWER case-file content into a validated per-unit Network."""
    scalars, tables = _read_tables(text)
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseParseError(f"missing mpc.{required} table")
    if "baseMVA" not in scalars:
        raise CaseParseError("missing mpc.baseMVA")
    base = float(scalars["baseMVA"])
    if base <= 0:
        raise CaseValidationError("baseMVA must be positive")

    kind_by_code = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}
    buses = []
    for row in tables["bus"]:
        code = int(row[1])
        if code == 4:
            continue  # isolated bus
        if code not in kind_by_code:
            raise CaseValidationError(f"unknown bus type {code} at bus {int(row[0])}")
        if row[12] > row[11]:
            raise CaseValidationError(f"bus {int(row[0])}: Vmin exceeds Vmax")
        buses.append(
            Bus(
                id=int(row[0]),
                kind=kind_by_code[code],
                p_load=row[2] / base,
                q_load=row[3] / base,
                v_min=row[12],
                v_max=row[11],
                shunt_g=row[4] / base,
                shunt_b=row[5] / base,
            )
        )
    bus_ids = {b.id for b in buses}

    gen_rows = [r for r in tables["gen"] if int(r[7]) > 0]
    cost_rows = tables.get("gencost")
    if cost_rows is not None:
        in_service = [i for i, r in enumerate(tables["gen"]) if int(r[7]) > 0]
        if len(cost_rows) < len(tables["gen"]):
            raise CaseParseError("gencost has fewer rows than gen")
        cost_rows = [cost_rows[i] for i in in_service]

    generators = []
    for i, row in enumerate(gen_rows):
        gbus = int(row[0])
        if gbus not in bus_ids:
            raise CaseValidationError(f"generator {i} references unknown bus {gbus}")
        if row[9] > row[8]:
            raise CaseValidationError(f"generator {i}: Pmin exceeds Pmax")
        if row[4] > row[3]:
            raise CaseValidationError(f"generator {i}: Qmin exceeds Qmax")
        cost = (0.0, 1.0, 0.0)  # uniform linear cost default, MW scale
        if cost_rows is not None:
            cost = _parse_cost(cost_rows[i], i)
        # rescale MW-space polynomial to per-unit power
        c2, c1, c0 = cost
        generators.append(
            Generator(
                bus=gbus,
                p_min=row[9] / base,
                p_max=row[8] / base,
                q_min=row[4] / base,
                q_max=row[3] / base,
                v_setpoint=row[5],
                cost=(c2 * base * base, c1 * base, c0),
                p_start=row[1] / base,
            )
        )

    branches = []
    for i, row in enumerate(tables["branch"]):
        if int(row[10]) <= 0:
            continue
        fbus, tbus = int(row[0]), int(row[1])
        if fbus not in bus_ids or tbus not in bus_ids:
            raise CaseValidationError(f"branch {i} references unknown bus")
        r, x = row[2], row[3]
        if r == 0.0 and x == 0.0:
            raise CaseValidationError(f"branch {i}: zero impedance")
        tap = row[8] if row[8] != 0.0 else 1.0
        if tap <= 0:
            raise CaseValidationError(f"branch {i}: non-positive tap ratio")
        phi_min, phi_max = _angle_limits(row[11], row[12])
        s_max = row[5] / base if row[5] > 0 else None
        branches.append(
            Branch(
                from_bus=fbus,
                to_bus=tbus,
                y=1.0 / complex(r, x),
                b_charge=row[4],
                tap=tap,
                shift=math.radians(row[9]),
                s_max=s_max,
                phi_min=phi_min,
                phi_max=phi_max,
            )
        )

    net = Network(
        buses=tuple(buses),
        generators=tuple(generators),
        branches=tuple(branches),
        base_mva=base,
        name=name,
    )
    return _validate(net)


def _parse_cost(row, gen_idx: int) -> tuple[float, float, float]:
    """MATPOWER gencost row -> (c2, c1, c0) in MW space."""
    model = int(row[0])
    if model == 1:
        raise UnsupportedCostError(
            f"generator {gen_idx}: piecewise-linear cost model not supported"
        )
    if model != 2:
        raise UnsupportedCostError(f"generator {gen_idx}: unknown cost model {model}")
    ncoef = int(row[3])
    coefs = row[4:4 + ncoef]
    if ncoef > 3:
        raise UnsupportedCostError(
            f"generator {gen_idx}: polynomial degree {ncoef - 1} > 2"
        )
    padded = [0.0] * (3 - len(coefs)) + list(coefs)
    c2, c1, c0 = padded
    if c2 < 0 or c1 < 0:
        raise UnsupportedCostError(
            f"generator {gen_idx}: cost must be nondecreasing (c2, c1 >= 0)"
        )
    return c2, c1, c0


def _validate(net: Network) -> Network:
    """Structural checks plus the PV/PQ normalizations."""
    slacks = net.buses_of_kind(BusKind.SLACK)
    if len(slacks) != 1:
        raise CaseValidationError(f"expected exactly one slack bus, found {len(slacks)}")

    gens_per_bus: dict[int, list[Generator]] = {}
    for g in net.generators:
        gens_per_bus.setdefault(g.bus, []).append(g)

    for bid, gens in gens_per_bus.items():
        vset = {round(g.v_setpoint, 9) for g in gens}
        if len(vset) > 1:
            raise CaseValidationError(
                f"co-located generators at bus {bid} disagree on voltage setpoint"
            )

    buses = list(net.buses)
    generators = list(net.generators)
    for i, b in enumerate(buses):
        gens = gens_per_bus.get(b.id, [])
        if b.kind == BusKind.PV and not gens:
            buses[i] = replace(b, kind=BusKind.PQ)  # orphaned PV bus
        if b.kind == BusKind.PQ and gens:
            raise CaseValidationError(f"generator at PQ bus {b.id}")
        if b.kind == BusKind.SLACK and not gens:
            raise CaseValidationError("slack bus has no generator")

    # fixed reactive output (Qmin == Qmax) folds into the bus load
    for gi, g in enumerate(generators):
        if g.q_min == g.q_max and g.q_min != 0.0:
            bpos = net.bus_index[g.bus]
            buses[bpos] = replace(
                buses[bpos], q_load=buses[bpos].q_load - g.q_min
            )
            generators[gi] = replace(g, q_min=0.0, q_max=0.0)

    net = Network(
        buses=tuple(buses),
        generators=tuple(generators),
        branches=net.branches,
        base_mva=net.base_mva,
        name=net.name,
    )

    # connectivity over in-service branches
    if net.n_branch == 0:
        raise CaseValidationError("network has no in-service branches")
    adj: dict[int, set[int]] = {b.id: set() for b in net.buses}
    for br in net.branches:
        adj[br.from_bus].add(br.to_bus)
        adj[br.to_bus].add(br.from_bus)
    seen = {net.buses[0].id}
    stack = [net.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != net.n_bus:
        raise CaseValidationError("network graph is not connected")
    return net


def load_case(path) -> Network:
    """Parse a case file from disk."""
    with open(path) as fh:
        text = fh.read()
    name = re.sub(r"\.m$", "", str(path).rsplit("/", 1)[-1])
    return parse_case(text, name=name)


# ---------------------------------------------------------------------------
# Case writing (round-trip support)
# ---------------------------------------------------------------------------

def write_case(net: Network) -> str:
    """Serialize a Network back to MATPOWER format (original units)."""
    base = net.base_mva
    code = {BusKind.PQ: 1, BusKind.PV: 2, BusKind.SLACK: 3}
    out = [f"function mpc = {net.name}", "mpc.version = '2';",
           f"mpc.baseMVA = {base!r};", "mpc.bus = ["]
    for b in net.buses:
        out.append(
            f"\t{b.id}\t{code[b.kind]}\t{b.p_load * base!r}\t{b.q_load * base!r}"
            f"\t{b.shunt_g * base!r}\t{b.shunt_b * base!r}\t1\t1.0\t0.0\t0.0\t1"
            f"\t{b.v_max!r}\t{b.v_min!r};"
        )
    out.append("];")
    out.append("mpc.gen = [")
    for g in net.generators:
        out.append(
            f"\t{g.bus}\t{g.p_start * base!r}\t0.0\t{g.q_max * base!r}"
            f"\t{g.q_min * base!r}\t{g.v_setpoint!r}\t{base!r}\t1"
            f"\t{g.p_max * base!r}\t{g.p_min * base!r};"
        )
    out.append("];")
    out.append("mpc.gencost = [")
    for g in net.generators:
        c2, c1, c0 = g.cost
        out.append(
            f"\t2\t0.0\t0.0\t3\t{c2 / base / base!r}\t{c1 / base!r}\t{c0!r};"
        )
    out.append("];")
    out.append("mpc.branch = [")
    for br in net.branches:
        z = 1.0 / br.y
        rate = br.s_max * base if br.s_max is not None else 0.0
        out.append(
            f"\t{br.from_bus}\t{br.to_bus}\t{z.real!r}\t{z.imag!r}"
            f"\t{br.b_charge!r}\t{rate!r}\t{rate!r}\t{rate!r}"
            f"\t{0.0 if br.tap == 1.0 else br.tap!r}\t{math.degrees(br.shift)!r}\t1"
            f"\t{math.degrees(br.phi_min)!r}\t{math.degrees(br.phi_max)!r};"
        )
    out.append("];")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Path documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathIteration:
    """One accepted setpoint along a feasible path."""

    u: np.ndarray
    objective: float
    step_norm: float
    bounds: dict | None = None       # polytope bounds chosen by the program
    solver_stats: dict | None = None


@dataclass(frozen=True)
class FeasiblePath:
    """Ordered control setpoints with per-segment certificates."""

    case_name: str
    control_names: tuple[str, ...]
    iterations: tuple[PathIteration, ...]
    termination: str
    certificates: tuple[dict, ...] = ()
    stats: dict | None = None

    @property
    def setpoints(self) -> list[np.ndarray]:
        return [it.u for it in self.iterations]

    @property
    def objectives(self) -> list[float]:
        return [it.objective for it in self.iterations]

    @property
    def n_segments(self) -> int:
        return len(self.iterations) - 1


def write_path(path: FeasiblePath) -> str:
    """Serialize a path to its versioned JSON document.

    Timing and solver statistics live in an isolated ``stats`` block so the
    remainder of the document is byte-stable across identical runs.
    """
    if not path.iterations:
        raise ValueError("cannot serialize an empty path")
    doc = {
        "schema_version": PATH_SCHEMA_VERSION,
        "case": path.case_name,
        "control_names": list(path.control_names),
        "termination": path.termination,
        "n_segments": path.n_segments,
        "iterations": [
            {
                "index": k,
                "u": [float(x) for x in it.u],
                "objective": it.objective,
                "step_norm": it.step_norm,
                "bounds": it.bounds,
            }
            for k, it in enumerate(path.iterations)
        ],
        "certificates": list(path.certificates),
        "stats": path.stats or {},
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_path(text: str) -> FeasiblePath:
    """Parse a path document written by :func:`write_path`."""
    doc = json.loads(text)
    if doc.get("schema_version") != PATH_SCHEMA_VERSION:
        raise ValueError(f"unsupported path schema {doc.get('schema_version')!r}")
    iterations = tuple(
        PathIteration(
            u=np.asarray(item["u"], dtype=float),
            objective=item["objective"],
            step_norm=item["step_norm"],
            bounds=item.get("bounds"),
        )
        for item in doc["iterations"]
    )
    return FeasiblePath(
        case_name=doc["case"],
        control_names=tuple(doc["control_names"]),
        iterations=iterations,
        termination=doc["termination"],
        certificates=tuple(doc.get("certificates", ())),
        stats=doc.get("stats") or None,
    )
