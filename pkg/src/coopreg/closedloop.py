"""Closed-loop vector field of the networked regulation protocol.

Per agent the loop runs an observer-based regulator: the input u combines
state feedback around the regulation manifold with feedforward from the
agent's own estimate of the exogenous signal; a Luenberger observer tracks
the plant state; and the exogenous estimate evolves with the exosystem flow
driven either by the output innovation (leaders) or by predictor-corrected
consensus coupling over the delivered network data (followers).

Two evaluation paths are provided with identical semantics:

* :func:`full_rhs` composes the per-agent operations literally, which keeps
  the equations readable and auditable;
* :class:`ClosedLoop` assembles the same affine map into one block matrix
  plus a per-edge forcing term, which is what the integrator calls.

The test suite pins the two paths to each other at randomized states, which
is a real equivalence proof here since both are affine in (states, payloads).
"""

from dataclasses import dataclass

import numpy as np

from . import comms
from .errors import DecompositionMismatch, RoleMismatch
from .plant import AgentModel, GainSet, RegulatorSolution
from .tolerances import ERROR_DECOMPOSITION_TOL


@dataclass
class AgentState:
    """Dynamic state of one agent: plant state x, observer state xhat, and
    the agent's exogenous-signal estimate."""
    x: np.ndarray
    xhat: np.ndarray
    upsilon_hat: np.ndarray


@dataclass
class ErrorCoordinates:
    """Error signals the convergence argument is phrased in.

    eps = x - Pi upsilon_hat (distance to the regulation manifold),
    x_tilde = xhat - x, v_tilde = upsilon_hat - upsilon, and the regulated
    error e, computed two independent ways and cross-checked."""
    eps: np.ndarray
    x_tilde: np.ndarray
    v_tilde: np.ndarray
    e: np.ndarray


@dataclass
class AgentLoop:
    """Static per-agent data: model, gains, regulator solution."""
    model: AgentModel
    gains: GainSet
    reg: RegulatorSolution


def control_input(m: AgentModel, g: GainSet, r: RegulatorSolution,
                  s: AgentState) -> np.ndarray:
    """u = K (xhat - Pi vhat) + Gamma vhat."""
    return g.K @ (s.xhat - r.Pi @ s.upsilon_hat) + r.Gamma @ s.upsilon_hat


def measured_output(m: AgentModel, x, u, upsilon) -> np.ndarray:
    """True plant output y = C x + D u + F upsilon."""
    return m.C @ x + m.D @ u + m.F @ upsilon


def observer_output(m: AgentModel, s: AgentState, u) -> np.ndarray:
    """Observer's output estimate yhat = C xhat + F vhat + D u."""
    return m.C @ s.xhat + m.F @ s.upsilon_hat + m.D @ u


def observer_rhs(m: AgentModel, g: GainSet, s: AgentState, u,
                 y) -> np.ndarray:
    """d(xhat)/dt = A xhat + E vhat + B u + L1 (yhat - y)."""
    innovation = observer_output(m, s, u) - y
    return m.A @ s.xhat + m.E @ s.upsilon_hat + m.B @ u + g.L1 @ innovation


def eta_leader(m: AgentModel, g: GainSet, s: AgentState, u,
               y) -> np.ndarray:
    """Leader estimator drive: eta = L2 (yhat - y)."""
    if not m.is_leader:
        raise RoleMismatch("eta_leader called on a follower")
    if g.L2 is None:
        raise RoleMismatch("leader gains are missing L2")
    return g.L2 @ (observer_output(m, s, u) - y)


def eta_follower(S, t: float, upsilon_hat_i, edges,
                 expm_fn=None) -> np.ndarray:
    """Follower estimator drive from delivered network data.

    eta = -sum_j a_ij (vhat_i - prediction_ij(t)) over the incoming edges,
    where the prediction propagates the stored payload of edge (j, i) from
    its send time to t.  Edges that have not delivered anything yet are
    skipped entirely (no damping, no data): before the first delivery there
    is nothing to disagree with, and the blackout bound puts data on every
    edge within h*.
    """
    eta = np.zeros_like(upsilon_hat_i)
    for weight, state in edges:
        if not state.has_data:
            continue
        pred = comms.predict(S, state, t, expm_fn=expm_fn)
        eta -= weight * (upsilon_hat_i - pred)
    return eta


def error_coordinates(m: AgentModel, r: RegulatorSolution, s: AgentState,
                      upsilon, u) -> ErrorCoordinates:
    """Error signals plus the dual computation of the regulated error.

    The regulated error is evaluated both directly from the plant,
    e = Ce x + De u + Fe upsilon, and through the error-coordinate
    decomposition Ce eps + De (u - Gamma vhat) - Fe v_tilde, which is the
    identity the convergence proof pivots on (it absorbs the second
    regulator equation).  Disagreement beyond tolerance raises
    :class:`DecompositionMismatch`; this check stays on in every run.
    """
    eps = s.x - r.Pi @ s.upsilon_hat
    x_tilde = s.xhat - s.x
    v_tilde = s.upsilon_hat - upsilon
    terms = (m.Ce @ s.x, m.De @ u, m.Fe @ upsilon, m.Ce @ eps,
             m.De @ (u - r.Gamma @ s.upsilon_hat), m.Fe @ v_tilde)
    e_raw = terms[0] + terms[1] + terms[2]
    e_dec = terms[3] + terms[4] - terms[5]
    gap = np.abs(e_raw - e_dec).max() if e_raw.size else 0.0
    # Roundoff in the two evaluations is relative to the terms entering
    # them, so the tolerance scales with their magnitude (it is the plain
    # 1e-9 whenever states are O(1)).
    scale = max(1.0, *(np.abs(tv).max() for tv in terms if tv.size))
    if gap > ERROR_DECOMPOSITION_TOL * scale:
        raise DecompositionMismatch(
            f"regulated-error decomposition off by {gap:.3e} "
            f"(tolerance {ERROR_DECOMPOSITION_TOL:.1e} at scale "
            f"{scale:.1e})")
    return ErrorCoordinates(eps=eps, x_tilde=x_tilde, v_tilde=v_tilde,
                            e=e_raw)


def full_rhs(loops, S, adjacency, edge_states, states, upsilon, t,
             expm_fn=None):
    """Time derivative of every agent state and of the exogenous signal.

    Literal composition of the per-agent operations: plant, controller,
    observer, estimator (leader innovation or follower network coupling),
    and the autonomous exosystem.  Returns (per-agent list of
    (dx, dxhat, dvhat), dupsilon).
    """
    adjacency = np.asarray(adjacency, dtype=float)
    derivs = []
    for i, (loop, s) in enumerate(zip(loops, states)):
        m, g = loop.model, loop.gains
        u = control_input(m, g, loop.reg, s)
        y = measured_output(m, s.x, u, upsilon)
        dx = m.A @ s.x + m.B @ u + m.E @ upsilon
        dxhat = observer_rhs(m, g, s, u, y)
        if m.is_leader:
            eta = eta_leader(m, g, s, u, y)
        else:
            edges = [(adjacency[i, j], edge_states[(j, i)])
                     for j in np.nonzero(adjacency[i])[0]]
            eta = eta_follower(S, t, s.upsilon_hat, edges, expm_fn=expm_fn)
        dvhat = S @ s.upsilon_hat + eta
        derivs.append((dx, dxhat, dvhat))
    return derivs, S @ upsilon


class ClosedLoop:
    """Flat-vector evaluator of the same field, assembled as block matrices.

    State layout: [x_0, xhat_0, vhat_0, ..., x_{n-1}, xhat_{n-1},
    vhat_{n-1}, upsilon].  The linear part only changes when an edge first
    delivers (its damping term joins the follower's estimator row); the
    predictor contributions enter through a per-edge forcing vector
    reassembled at every evaluation.
    """

    def __init__(self, loops, S, adjacency, expm_fn=None):
        self.loops = list(loops)
        self.S = np.asarray(S, dtype=float)
        self.adjacency = np.asarray(adjacency, dtype=float)
        self.expm_fn = expm_fn
        self.q = self.S.shape[0]
        n = len(self.loops)

        self.off_x, self.off_xhat, self.off_vhat = [], [], []
        off = 0
        for loop in self.loops:
            nx = loop.model.nx
            self.off_x.append(off)
            self.off_xhat.append(off + nx)
            self.off_vhat.append(off + 2 * nx)
            off += 2 * nx + self.q
        self.off_upsilon = off
        self.dim = off + self.q

        # receiver-side memory, one per directed edge
        self.edge_states = {
            (j, i): comms.EdgeState()
            for i in range(n) for j in np.nonzero(self.adjacency[i])[0]
        }
        self._active = set()
        self._build_matrix()

    def _build_matrix(self):
        M = np.zeros((self.dim, self.dim))
        q = self.q
        for i, loop in enumerate(self.loops):
            m, g, r = loop.model, loop.gains, loop.reg
            nx = m.nx
            sx = slice(self.off_x[i], self.off_x[i] + nx)
            sxh = slice(self.off_xhat[i], self.off_xhat[i] + nx)
            svh = slice(self.off_vhat[i], self.off_vhat[i] + q)
            sups = slice(self.off_upsilon, self.off_upsilon + q)
            G2 = r.Gamma - g.K @ r.Pi  # u = K xhat + G2 vhat
            # plant row
            M[sx, sx] += m.A
            M[sx, sxh] += m.B @ g.K
            M[sx, svh] += m.B @ G2
            M[sx, sups] += m.E
            # observer row (innovation = C (xhat - x) + F (vhat - upsilon))
            M[sxh, sx] += -g.L1 @ m.C
            M[sxh, sxh] += m.A + m.B @ g.K + g.L1 @ m.C
            M[sxh, svh] += m.E + m.B @ G2 + g.L1 @ m.F
            M[sxh, sups] += -g.L1 @ m.F
            # estimator row
            M[svh, svh] += self.S
            if m.is_leader:
                M[svh, sx] += -g.L2 @ m.C
                M[svh, sxh] += g.L2 @ m.C
                M[svh, svh] += g.L2 @ m.F
                M[svh, sups] += -g.L2 @ m.F
            else:
                kappa_active = sum(
                    self.adjacency[i, j] for (j, i2) in self._active
                    if i2 == i)
                M[svh, svh] += -kappa_active * np.eye(q)
        # exosystem row
        sups = slice(self.off_upsilon, self.off_upsilon + q)
        M[sups, sups] += self.S
        self.M = M

    def apply_delivery(self, edge, msg, now):
        """Deliver a message to an edge; rebuilds the linear part when the
        edge becomes active for the first time."""
        comms.deliver(self.edge_states[edge], msg, now)
        if edge not in self._active:
            self._active.add(edge)
            self._build_matrix()

    def forcing(self, t):
        """Predictor contributions of every active edge at time t."""
        c = np.zeros(self.dim)
        q = self.q
        for (j, i) in self._active:
            state = self.edge_states[(j, i)]
            pred = comms.predict(self.S, state, t, expm_fn=self.expm_fn)
            lo = self.off_vhat[i]
            c[lo:lo + q] += self.adjacency[i, j] * pred
        return c

    def rhs(self, t, y):
        return self.M @ y + self.forcing(t)

    # -- structured <-> flat conversions ------------------------------------

    def pack(self, states, upsilon):
        y = np.zeros(self.dim)
        for i, (loop, s) in enumerate(zip(self.loops, states)):
            nx = loop.model.nx
            y[self.off_x[i]:self.off_x[i] + nx] = s.x
            y[self.off_xhat[i]:self.off_xhat[i] + nx] = s.xhat
            y[self.off_vhat[i]:self.off_vhat[i] + self.q] = s.upsilon_hat
        y[self.off_upsilon:] = upsilon
        return y

    def unpack(self, y):
        states = []
        for i, loop in enumerate(self.loops):
            nx = loop.model.nx
            states.append(AgentState(
                x=y[self.off_x[i]:self.off_x[i] + nx].copy(),
                xhat=y[self.off_xhat[i]:self.off_xhat[i] + nx].copy(),
                upsilon_hat=y[self.off_vhat[i]:
                              self.off_vhat[i] + self.q].copy()))
        return states, y[self.off_upsilon:].copy()

    def upsilon_hat_of(self, y, i):
        """Sender i's current exogenous estimate (payload capture)."""
        lo = self.off_vhat[i]
        return y[lo:lo + self.q].copy()
