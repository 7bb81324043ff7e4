"""Phase-adjusted power-flow evaluation and the Newton-Raphson solver.

The control vector ``u`` stacks active power at PV-bus generators followed by
voltage setpoints at generator buses; the state vector ``x`` stacks non-slack
angles followed by PQ voltages.  Everything below works on those two vectors
plus the immutable grid structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cases import BusKind, Network
from .errors import DivergenceError, SingularJacobianError
from .matrices import (AdmittanceSet, IncidenceSet, NetworkIndex,
                       build_admittances, build_incidence, build_index)

NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 50


@dataclass(frozen=True)
class Grid:
    """Immutable bundle of the network and its index structures."""

    net: Network
    inc: IncidenceSet
    idx: NetworkIndex
    p_load: np.ndarray
    q_load: np.ndarray

    @property
    def n_line(self) -> int:
        return self.net.n_branch


def build_grid(net: Network) -> Grid:
    inc = build_incidence(net)
    idx = build_index(net, inc)
    p_load = np.array([b.p_load for b in net.buses])
    q_load = np.array([b.q_load for b in net.buses])
    return Grid(net=net, inc=inc, idx=idx, p_load=p_load, q_load=q_load)


def admittances_at(grid: Grid, phi0: np.ndarray | None = None) -> AdmittanceSet:
    return build_admittances(grid.net, grid.inc, phi0)


@dataclass(frozen=True)
class OperatingPoint:
    u: np.ndarray
    x: np.ndarray
    solved: bool = False
    iterations: int = 0

    def copy_with(self, **kw) -> "OperatingPoint":
        base = {"u": self.u, "x": self.x, "solved": self.solved,
                "iterations": self.iterations}
        base.update(kw)
        return OperatingPoint(**base)


@dataclass(frozen=True)
class BasisVector:
    psi_c: np.ndarray   # v_f v_t cos(phi - phi0), per line
    psi_s: np.ndarray   # v_f v_t sin(phi - phi0), per line
    psi_q: np.ndarray   # v^2, per bus

    def stack(self) -> np.ndarray:
        return np.concatenate([self.psi_c, self.psi_s, self.psi_q])


# ---------------------------------------------------------------------------
# control / state plumbing
# ---------------------------------------------------------------------------

def default_control(net: Network, grid: Grid | None = None) -> np.ndarray:
    """Control vector from the case file's dispatch and setpoints."""
    grid = grid or build_grid(net)
    idx = grid.idx
    p_pv = np.array([net.generators[g].p_start for g in idx.pv_gens])
    v_g = np.array([net.generators[grid.net.generators_at(b)[0]].v_setpoint
                    for b in idx.gen_buses])
    return np.concatenate([p_pv, v_g])


def split_control(grid: Grid, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_pv = len(grid.idx.pv_gens)
    return u[:n_pv], u[n_pv:]


def flat_state(grid: Grid) -> np.ndarray:
    return np.concatenate([
        np.zeros(len(grid.idx.nonslack)),
        np.ones(grid.idx.n_pq),
    ])


def voltages(grid: Grid, x: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full bus angle and magnitude vectors implied by (x, u)."""
    idx = grid.idx
    n_ns = len(idx.nonslack)
    theta = np.zeros(grid.net.n_bus)
    theta[idx.nonslack] = x[:n_ns]
    v = np.empty(grid.net.n_bus)
    v[idx.pq] = x[n_ns:]
    _, v_g = split_control(grid, u)
    v[idx.gen_buses] = v_g
    return theta, v


def gen_active_power(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Per-generator active power with slack-bus entries left at zero."""
    p_g = np.zeros(grid.net.n_gen)
    p_pv, _ = split_control(grid, u)
    p_g[grid.idx.pv_gens] = p_pv
    return p_g


def basis(grid: Grid, adm: AdmittanceSet, x: np.ndarray, u: np.ndarray) -> BasisVector:
    """Exact trigonometric basis evaluation at (x, u)."""
    theta, v = voltages(grid, x, u)
    f, t = grid.inc.f_idx, grid.inc.t_idx
    phi_t = theta[f] - theta[t] - adm.phi0
    vf, vt = v[f], v[t]
    return BasisVector(
        psi_c=vf * vt * np.cos(phi_t),
        psi_s=vf * vt * np.sin(phi_t),
        psi_q=v * v,
    )


# ---------------------------------------------------------------------------
# equation-system matrices
# ---------------------------------------------------------------------------

def m_eq(grid: Grid, adm: AdmittanceSet) -> sp.csr_matrix:
    """Coefficients of the square power-flow system on the basis vector."""
    idx = grid.idx
    ns, pq = idx.nonslack, idx.pq
    top = sp.hstack([-adm.Gc_hat[ns], -adm.Bs_hat[ns], -adm.Gd[ns]])
    bot = sp.hstack([adm.Bc_hat[pq], -adm.Gs_hat[pq], adm.Bd[pq]])
    return sp.vstack([top, bot]).tocsr()


def m_ineq(grid: Grid, adm: AdmittanceSet) -> sp.csr_matrix:
    """Rows recovering slack power and generator-bus reactive injections."""
    idx = grid.idx
    s = [idx.slack]
    pv = idx.pv
    rows = [
        sp.hstack([adm.Gc_hat[s], adm.Bs_hat[s], adm.Gd[s]]),
        sp.hstack([-adm.Bc_hat[s], adm.Gs_hat[s], -adm.Bd[s]]),
    ]
    if len(pv):
        rows.append(sp.hstack([-adm.Bc_hat[pv], adm.Gs_hat[pv], -adm.Bd[pv]]))
    return sp.vstack(rows).tocsr()


def tau(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Specified injections of the square system, affine in the controls."""
    idx = grid.idx
    p_g = gen_active_power(grid, u)
    p_inj = grid.inc.C @ p_g - grid.p_load
    return np.concatenate([p_inj[idx.nonslack], -grid.q_load[idx.pq]])


def zeta(grid: Grid, p_g: np.ndarray, q_g: np.ndarray) -> np.ndarray:
    """Intermediate-variable injections matching the m_ineq rows."""
    idx = grid.idx
    p_inj = grid.inc.C @ p_g - grid.p_load
    q_inj = grid.inc.C @ q_g - grid.q_load
    return np.concatenate([
        [p_inj[idx.slack]], [q_inj[idx.slack]], q_inj[idx.pv]
    ])


def line_flow_matrices(grid: Grid, adm: AdmittanceSet) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Matrices mapping the basis vector to from/to-end (p, q) line flows.

    Uses the phase-adjusted per-line couplings so the mapping is exact for
    any base angle; verified against the complex-arithmetic oracle.
    """
    gft, bft = adm.yft_hat.real, adm.yft_hat.imag
    gtf, btf = adm.ytf_hat.real, adm.ytf_hat.imag
    gff, bff = adm.yff.real, adm.yff.imag
    gtt, btt = adm.ytt.real, adm.ytt.imag
    EfT, EtT = grid.inc.E_f.T, grid.inc.E_t.T
    d = sp.diags
    L_f = sp.vstack([
        sp.hstack([d(gft), d(bft), d(gff) @ EfT]),
        sp.hstack([d(-bft), d(gft), d(-bff) @ EfT]),
    ]).tocsr()
    L_t = sp.vstack([
        sp.hstack([d(gtf), d(-btf), d(gtt) @ EtT]),
        sp.hstack([d(-btf), d(-gtf), d(-btt) @ EtT]),
    ]).tocsr()
    return L_f, L_t


# ---------------------------------------------------------------------------
# Jacobians
# ---------------------------------------------------------------------------

def basis_jacobian(grid: Grid, adm: AdmittanceSet, x: np.ndarray,
                   u: np.ndarray) -> sp.csr_matrix:
    """Analytic partials of the basis vector w.r.t. the state variables."""
    idx = grid.idx
    theta, v = voltages(grid, x, u)
    f, t = grid.inc.f_idx, grid.inc.t_idx
    phi_t = theta[f] - theta[t] - adm.phi0
    vf, vt = v[f], v[t]
    sin_p, cos_p = np.sin(phi_t), np.cos(phi_t)

    n_l, n_b = grid.n_line, grid.net.n_bus
    n_ns = len(idx.nonslack)
    n_x = idx.n_state
    th_col, v_col = idx.theta_col, idx.vpq_col

    rows, cols, vals = [], [], []

    def add(r, c, val):
        rows.append(r)
        cols.append(c)
        vals.append(val)

    for l in range(n_l):
        fb, tb = f[l], t[l]
        # cosine rows
        if th_col[fb] >= 0:
            add(l, th_col[fb], -vf[l] * vt[l] * sin_p[l])
        if th_col[tb] >= 0:
            add(l, th_col[tb], vf[l] * vt[l] * sin_p[l])
        if v_col[fb] >= 0:
            add(l, n_ns + v_col[fb], vt[l] * cos_p[l])
        if v_col[tb] >= 0:
            add(l, n_ns + v_col[tb], vf[l] * cos_p[l])
        # sine rows
        if th_col[fb] >= 0:
            add(n_l + l, th_col[fb], vf[l] * vt[l] * cos_p[l])
        if th_col[tb] >= 0:
            add(n_l + l, th_col[tb], -vf[l] * vt[l] * cos_p[l])
        if v_col[fb] >= 0:
            add(n_l + l, n_ns + v_col[fb], vt[l] * sin_p[l])
        if v_col[tb] >= 0:
            add(n_l + l, n_ns + v_col[tb], vf[l] * sin_p[l])
    for k in idx.pq:
        add(2 * n_l + k, n_ns + v_col[k], 2.0 * v[k])

    return sp.csr_matrix(
        (vals, (rows, cols)), shape=(2 * n_l + n_b, n_x)
    )


def jacobian(grid: Grid, adm: AdmittanceSet, x: np.ndarray,
             u: np.ndarray) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """(J_f, J_psi): square system Jacobian and basis Jacobian at (x, u)."""
    J_psi = basis_jacobian(grid, adm, x, u)
    J_f = (m_eq(grid, adm) @ J_psi).tocsc()
    return J_f, J_psi


# ---------------------------------------------------------------------------
# Newton-Raphson
# ---------------------------------------------------------------------------

def mismatch(grid: Grid, adm: AdmittanceSet, x: np.ndarray, u: np.ndarray,
             Meq: sp.csr_matrix | None = None) -> np.ndarray:
    Meq = m_eq(grid, adm) if Meq is None else Meq
    return tau(grid, u) + Meq @ basis(grid, adm, x, u).stack()


def solve_pf(grid: Grid, adm: AdmittanceSet, u: np.ndarray,
             x_init: np.ndarray | None = None, tol: float = NEWTON_TOL,
             max_iter: int = NEWTON_MAX_ITER) -> OperatingPoint:
    """Full-step Newton-Raphson on the square phase-adjusted system."""
    x = flat_state(grid) if x_init is None else np.array(x_init, dtype=float)
    Meq = m_eq(grid, adm)
    for it in range(max_iter):
        f = mismatch(grid, adm, x, u, Meq)
        if not np.all(np.isfinite(f)):
            raise DivergenceError(f"power flow diverged at iteration {it}")
        if np.max(np.abs(f)) < tol:
            return OperatingPoint(u=np.array(u, dtype=float), x=x,
                                  solved=True, iterations=it)
        J_f = (Meq @ basis_jacobian(grid, adm, x, u)).tocsc()
        try:
            lu = spla.splu(J_f)
        except RuntimeError as exc:
            raise SingularJacobianError(str(exc)) from exc
        dx = lu.solve(-f)
        if not np.all(np.isfinite(dx)):
            raise SingularJacobianError("non-finite Newton step")
        x = x + dx
    raise DivergenceError(
        f"no convergence in {max_iter} Newton iterations "
        f"(residual {np.max(np.abs(mismatch(grid, adm, x, u, Meq))):.3e})"
    )


# ---------------------------------------------------------------------------
# intermediate variables and feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntermediateVars:
    p_slack: float              # total slack-bus generation
    q_slack: float              # total slack-bus reactive generation
    q_pv: np.ndarray            # per-PV-bus reactive generation (aggregate)
    s_f: np.ndarray             # (2 n_l,) from-end stacked (p, q) flows
    s_t: np.ndarray             # (2 n_l,) to-end stacked (p, q) flows


def intermediates(grid: Grid, adm: AdmittanceSet, x: np.ndarray,
                  u: np.ndarray) -> IntermediateVars:
    idx = grid.idx
    psi = basis(grid, adm, x, u).stack()
    z = m_ineq(grid, adm) @ psi
    L_f, L_t = line_flow_matrices(grid, adm)
    p_slack = z[0] + grid.p_load[idx.slack]
    q_slack = z[1] + grid.q_load[idx.slack]
    q_pv = z[2:] + grid.q_load[idx.pv]
    return IntermediateVars(
        p_slack=float(p_slack), q_slack=float(q_slack), q_pv=q_pv,
        s_f=L_f @ psi, s_t=L_t @ psi,
    )


def generator_dispatch(grid: Grid, adm: AdmittanceSet,
                       op: OperatingPoint) -> np.ndarray:
    """Per-generator active power at a solved point (slack bus split at
    minimum cost among co-located units)."""
    inter = intermediates(grid, adm, op.x, op.u)
    p_g = gen_active_power(grid, op.u)
    share = split_generation(
        [grid.net.generators[g] for g in grid.idx.slack_gens], inter.p_slack
    )
    p_g[grid.idx.slack_gens] = share
    return p_g


def split_generation(gens, total: float) -> np.ndarray:
    """Cheapest split of a bus-aggregate power among co-located units."""
    n = len(gens)
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([total])
    lo = np.array([g.p_min for g in gens])
    hi = np.array([g.p_max for g in gens])
    total = min(max(total, lo.sum()), hi.sum())
    c2 = np.array([g.cost[0] for g in gens])
    c1 = np.array([g.cost[1] for g in gens])

    def alloc(lam):
        p = np.where(c2 > 0, (lam - c1) / (2 * np.maximum(c2, 1e-30)),
                     np.where(c1 <= lam, hi, lo))
        return np.clip(p, lo, hi)

    lam_lo, lam_hi = c1.min() - 1.0, c1.max() + 2 * (c2 * hi).max() + 1.0
    for _ in range(200):
        lam = 0.5 * (lam_lo + lam_hi)
        if alloc(lam).sum() < total:
            lam_lo = lam
        else:
            lam_hi = lam
    p = alloc(lam_hi)
    # distribute any residual from degenerate (linear-cost) units
    gap = total - p.sum()
    for i in np.argsort(c1):
        room = hi[i] - p[i] if gap > 0 else lo[i] - p[i]
        take = np.clip(gap, min(room, 0), max(room, 0))
        p[i] += take
        gap -= take
    return p


@dataclass(frozen=True)
class FeasibilityReport:
    """Worst margin per operational constraint class (>= 0 means satisfied)."""

    margins: dict
    tol: float

    @property
    def feasible(self) -> bool:
        return all(m >= -self.tol for m in self.margins.values())

    @property
    def worst(self) -> float:
        return min(self.margins.values())

    def violated(self) -> list[str]:
        return [k for k, m in self.margins.items() if m < -self.tol]


def check_feasibility(grid: Grid, adm: AdmittanceSet, op: OperatingPoint,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Evaluate every operational constraint class at a solved point."""
    net, idx = grid.net, grid.idx
    theta, v = voltages(grid, op.x, op.u)
    inter = intermediates(grid, adm, op.x, op.u)
    inf = float("inf")

    margins: dict[str, float] = {}

    # generator active power (PV controls plus slack-bus aggregate)
    p_margin = inf
    p_pv, _ = split_control(grid, op.u)
    for g, p in zip(idx.pv_gens, p_pv):
        gen = net.generators[g]
        p_margin = min(p_margin, gen.p_max - p, p - gen.p_min)
    slack_gens = [net.generators[g] for g in idx.slack_gens]
    p_margin = min(
        p_margin,
        sum(g.p_max for g in slack_gens) - inter.p_slack,
        inter.p_slack - sum(g.p_min for g in slack_gens),
    )
    margins["gen_p"] = float(p_margin)

    # generator reactive power, bus aggregates
    q_margin = inf
    q_margin = min(
        q_margin,
        sum(g.q_max for g in slack_gens) - inter.q_slack,
        inter.q_slack - sum(g.q_min for g in slack_gens),
    )
    for j, b in enumerate(idx.pv):
        gens = [net.generators[g] for g in grid.net.generators_at(b)]
        q_margin = min(
            q_margin,
            sum(g.q_max for g in gens) - inter.q_pv[j],
            inter.q_pv[j] - sum(g.q_min for g in gens),
        )
    margins["gen_q"] = float(q_margin)

    v_margin = inf
    for i, b in enumerate(net.buses):
        v_margin = min(v_margin, b.v_max - v[i], v[i] - b.v_min)
    margins["voltage"] = float(v_margin)

    phi = theta[grid.inc.f_idx] - theta[grid.inc.t_idx]
    a_margin = inf
    for l, br in enumerate(net.branches):
        a_margin = min(a_margin, br.phi_max - phi[l], phi[l] - br.phi_min)
    margins["angle"] = float(a_margin)

    n_l = grid.n_line
    for label, s in (("flow_from", inter.s_f), ("flow_to", inter.s_t)):
        f_margin = inf
        for l, br in enumerate(net.branches):
            if br.s_max is None:
                continue
            f_margin = min(
                f_margin, br.s_max - float(np.hypot(s[l], s[n_l + l]))
            )
        margins[label] = float(f_margin)

    return FeasibilityReport(margins=margins, tol=tol)
