"""Incidence, connection, and (phase-adjusted) admittance matrices.

Everything here is built once per base point and shared immutably by the
power-flow and restriction machinery.  Line-level admittances are stored as
1-D complex arrays (the diagonals of the corresponding matrices); bus-level
couplings are scipy sparse matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cases import BusKind, Network


@dataclass(frozen=True)
class IncidenceSet:
    E_f: sp.csr_matrix          # bus x line, 1 at from-bus
    E_t: sp.csr_matrix          # bus x line, 1 at to-bus
    E: sp.csr_matrix            # E_f - E_t
    E_ns: sp.csr_matrix         # E with the slack row removed
    C: sp.csr_matrix            # bus x generator
    f_idx: np.ndarray           # per-line from-bus position
    t_idx: np.ndarray           # per-line to-bus position
    gen_bus: np.ndarray         # per-generator bus position


def build_incidence(net: Network) -> IncidenceSet:
    n_b, n_l, n_g = net.n_bus, net.n_branch, net.n_gen
    f_idx = np.array([net.bus_index[br.from_bus] for br in net.branches], dtype=int)
    t_idx = np.array([net.bus_index[br.to_bus] for br in net.branches], dtype=int)
    cols = np.arange(n_l)
    ones = np.ones(n_l)
    E_f = sp.csr_matrix((ones, (f_idx, cols)), shape=(n_b, n_l))
    E_t = sp.csr_matrix((ones, (t_idx, cols)), shape=(n_b, n_l))
    E = (E_f - E_t).tocsr()
    keep = np.ones(n_b, dtype=bool)
    keep[net.slack] = False
    E_ns = E[keep]
    gen_bus = np.array([net.bus_index[g.bus] for g in net.generators], dtype=int)
    C = sp.csr_matrix(
        (np.ones(n_g), (gen_bus, np.arange(n_g))), shape=(n_b, n_g)
    )
    return IncidenceSet(E_f=E_f, E_t=E_t, E=E, E_ns=E_ns, C=C,
                        f_idx=f_idx, t_idx=t_idx, gen_bus=gen_bus)


@dataclass(frozen=True)
class AdmittanceSet:
    """Per-line/bus admittances plus the phase-adjusted bus-line couplings."""

    phi0: np.ndarray            # base angle difference per line
    yff: np.ndarray             # complex diagonals of Y_ff .. Y_tf
    ytt: np.ndarray
    yft: np.ndarray
    ytf: np.ndarray
    ysh: np.ndarray             # complex bus shunts
    yft_hat: np.ndarray         # Y_ft * exp(-j phi0)
    ytf_hat: np.ndarray         # Y_tf * exp(+j phi0)
    Gc_hat: sp.csr_matrix       # bus x line couplings, real/imag split
    Gs_hat: sp.csr_matrix
    Bc_hat: sp.csr_matrix
    Bs_hat: sp.csr_matrix
    Gd: sp.csr_matrix           # bus x bus direct terms
    Bd: sp.csr_matrix


def build_admittances(net: Network, inc: IncidenceSet,
                      phi0: np.ndarray | None = None) -> AdmittanceSet:
    """Assemble the admittance set around base angle differences ``phi0``.

    With ``phi0 = 0`` the hatted (phase-adjusted) quantities coincide with
    the plain ones.
    """
    n_l = net.n_branch
    if phi0 is None:
        phi0 = np.zeros(n_l)
    phi0 = np.asarray(phi0, dtype=float)
    if phi0.shape != (n_l,):
        raise ValueError(f"phi0 must have length {n_l}")

    y = np.array([br.y for br in net.branches])
    bc = np.array([br.b_charge for br in net.branches])
    tau = np.array([br.tap for br in net.branches])
    shift = np.array([br.shift for br in net.branches])

    ycharged = y + 0.5j * bc
    yff = ycharged / tau**2
    ytt = ycharged.copy()
    yft = -y / (tau * np.exp(-1j * shift))
    ytf = -y / (tau * np.exp(1j * shift))

    ysh = np.array([complex(b.shunt_g, b.shunt_b) for b in net.buses])

    yft_hat = yft * np.exp(-1j * phi0)
    ytf_hat = ytf * np.exp(1j * phi0)

    Yc = inc.E_f @ sp.diags(yft_hat) + inc.E_t @ sp.diags(ytf_hat)
    Ys = inc.E_f @ sp.diags(yft_hat) - inc.E_t @ sp.diags(ytf_hat)
    Yd = (inc.E_f @ sp.diags(yff) @ inc.E_f.T
          + inc.E_t @ sp.diags(ytt) @ inc.E_t.T
          + sp.diags(ysh))

    return AdmittanceSet(
        phi0=phi0,
        yff=yff, ytt=ytt, yft=yft, ytf=ytf, ysh=ysh,
        yft_hat=yft_hat, ytf_hat=ytf_hat,
        Gc_hat=Yc.real.tocsr(), Gs_hat=Ys.real.tocsr(),
        Bc_hat=Yc.imag.tocsr(), Bs_hat=Ys.imag.tocsr(),
        Gd=Yd.real.tocsr(), Bd=Yd.imag.tocsr(),
    )


@dataclass(frozen=True)
class NetworkIndex:
    """Variable bookkeeping shared by the solver and restriction modules.

    Controls are the PV-generator active powers followed by the generator-bus
    voltage setpoints; states are non-slack angles followed by PQ voltages.
    """

    pq: np.ndarray              # PQ bus positions
    pv: np.ndarray              # PV bus positions
    slack: int
    nonslack: np.ndarray        # all bus positions except slack
    gen_buses: np.ndarray      # unique generator-bus positions (PV + slack)
    pv_gens: np.ndarray         # generators at PV buses
    slack_gens: np.ndarray      # generators at the slack bus
    vpq_col: np.ndarray         # bus position -> v_pq column (-1 if not PQ)
    theta_col: np.ndarray       # bus position -> theta_ns column (-1 if slack)
    vg_col: np.ndarray          # bus position -> v_g column (-1 if not gen bus)
    control_names: tuple[str, ...]

    @property
    def n_pq(self) -> int:
        return len(self.pq)

    @property
    def n_state(self) -> int:
        return len(self.nonslack) + len(self.pq)

    @property
    def n_control(self) -> int:
        return len(self.pv_gens) + len(self.gen_buses)


def build_index(net: Network, inc: IncidenceSet) -> NetworkIndex:
    n_b = net.n_bus
    kinds = [b.kind for b in net.buses]
    pq = np.array([i for i, k in enumerate(kinds) if k == BusKind.PQ], dtype=int)
    pv = np.array([i for i, k in enumerate(kinds) if k == BusKind.PV], dtype=int)
    slack = net.slack
    nonslack = np.array([i for i in range(n_b) if i != slack], dtype=int)

    gen_buses = np.unique(inc.gen_bus)
    pv_gens = np.array(
        [g for g in range(net.n_gen)
         if kinds[inc.gen_bus[g]] == BusKind.PV], dtype=int
    )
    slack_gens = np.array(
        [g for g in range(net.n_gen)
         if kinds[inc.gen_bus[g]] == BusKind.SLACK], dtype=int
    )

    vpq_col = -np.ones(n_b, dtype=int)
    vpq_col[pq] = np.arange(len(pq))
    theta_col = -np.ones(n_b, dtype=int)
    theta_col[nonslack] = np.arange(len(nonslack))
    vg_col = -np.ones(n_b, dtype=int)
    vg_col[gen_buses] = np.arange(len(gen_buses))

    names = tuple(
        f"p_gen{g}_bus{net.generators[g].bus}" for g in pv_gens
    ) + tuple(f"v_bus{net.buses[b].id}" for b in gen_buses)
    return NetworkIndex(
        pq=pq, pv=pv, slack=slack, nonslack=nonslack,
        gen_buses=gen_buses, pv_gens=pv_gens, slack_gens=slack_gens,
        vpq_col=vpq_col, theta_col=theta_col, vg_col=vg_col,
        control_names=names,
    )
