"""Agent and exosystem models, regulator equations, and gain synthesis.

An :class:`AgentModel` bundles the state-space matrices of one agent together
with the matrices defining its regulated error.  The operations in this
module check the solvability conditions agent by agent (stabilizability,
detectability, regulator equations, exosystem spectrum) and synthesize or
validate the stabilizing gains the controller needs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import RoleMismatch, Uncontrollable, Unsolvable
from .tolerances import PBH_BOUNDARY, REGULATOR_RESIDUAL_TOL, REL_RANK_TOL

LEADER = "leader"
FOLLOWER = "follower"


def _mat(value, rows, cols, what):
    M = np.asarray(value, dtype=float).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{what} has non-finite entries")
    return M


@dataclass
class AgentModel:
    """State-space model of one agent plus its regulated-error matrices.

    Dynamics:  dx/dt = A x + B u + E v,   y = C x + D u + F v,
    regulated error:  e = Ce x + De u + Fe v,
    where v is the shared exogenous signal.  ``role`` is ``"leader"`` when
    the agent can reconstruct v from its own measurements and ``"follower"``
    otherwise.
    """
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    Ce: np.ndarray
    De: np.ndarray
    Fe: np.ndarray
    role: str

    def __post_init__(self):
        if self.role not in (LEADER, FOLLOWER):
            raise ValueError(f"role must be 'leader' or 'follower', "
                             f"got {self.role!r}")
        A = np.asarray(self.A, dtype=float)
        nx = A.shape[0]
        self.A = _mat(self.A, nx, nx, "A")
        nu = np.asarray(self.B).reshape(nx, -1).shape[1]
        self.B = _mat(self.B, nx, nu, "B")
        ny = np.asarray(self.C).reshape(-1, nx).shape[0]
        self.C = _mat(self.C, ny, nx, "C")
        self.D = _mat(self.D, ny, nu, "D")
        q = np.asarray(self.E).reshape(nx, -1).shape[1]
        self.E = _mat(self.E, nx, q, "E")
        self.F = _mat(self.F, ny, q, "F")
        pe = np.asarray(self.Ce).reshape(-1, nx).shape[0]
        self.Ce = _mat(self.Ce, pe, nx, "Ce")
        self.De = _mat(self.De, pe, nu, "De")
        self.Fe = _mat(self.Fe, pe, q, "Fe")

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def nu(self):
        return self.B.shape[1]

    @property
    def ny(self):
        return self.C.shape[0]

    @property
    def pe(self):
        return self.Ce.shape[0]

    @property
    def q(self):
        return self.E.shape[1]

    @property
    def is_leader(self):
        return self.role == LEADER


@dataclass
class ExoSystem:
    """Autonomous generator dv/dt = S v of references and disturbances."""
    S: np.ndarray
    upsilon0: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        q = S.shape[0]
        self.S = _mat(self.S, q, q, "S")
        self.upsilon0 = np.asarray(self.upsilon0, dtype=float).reshape(q)

    @property
    def q(self):
        return self.S.shape[0]


@dataclass
class RegulatorSolution:
    """Solution (Pi, Gamma) of the regulator equations for one agent:

        Pi S = A Pi + B Gamma + E,      0 = Ce Pi + De Gamma + Fe.

    ``nullity`` is the dimension of the solution set's affine degrees of
    freedom (zero when the solution is unique)."""
    Pi: np.ndarray
    Gamma: np.ndarray
    nullity: int = 0


@dataclass
class GainSet:
    """Controller/observer gains for one agent.

    ``K`` shapes the state feedback, ``L1`` the state observer.  Leaders
    additionally carry ``L2``, which drives their local estimate of the
    exogenous signal from the output innovation."""
    K: np.ndarray
    L1: np.ndarray
    L2: np.ndarray = None

    def __post_init__(self):
        self.K = np.atleast_2d(np.asarray(self.K, dtype=float))
        self.L1 = np.asarray(self.L1, dtype=float)
        if self.L1.ndim == 1:
            self.L1 = self.L1.reshape(-1, 1)
        if self.L2 is not None:
            self.L2 = np.asarray(self.L2, dtype=float)
            if self.L2.ndim == 1:
                self.L2 = self.L2.reshape(-1, 1)


def regulator_system(m: AgentModel, S) -> tuple:
    """Stack the regulator equations into one linear system M z = rhs.

    The unknown z is [vec(Pi); vec(Gamma)] in column-major (Fortran) vec
    convention, using vec(A X B) = (B^T kron A) vec(X)."""
    S = np.asarray(S, dtype=float)
    q = S.shape[0]
    nx, nu, pe = m.nx, m.nu, m.pe
    Iq = np.eye(q)
    # Pi S - A Pi - B Gamma = E
    top = np.hstack([np.kron(S.T, np.eye(nx)) - np.kron(Iq, m.A),
                     -np.kron(Iq, m.B)])
    # Ce Pi + De Gamma = -Fe
    bottom = np.hstack([np.kron(Iq, m.Ce), np.kron(Iq, m.De)])
    M = np.vstack([top, bottom])
    rhs = np.concatenate([m.E.flatten(order="F"), -m.Fe.flatten(order="F")])
    return M, rhs


def solve_regulator_equations(m: AgentModel, S) -> RegulatorSolution:
    """Solve the regulator equations by vectorization + least squares.

    Returns the minimum-norm solution when the system is underdetermined.
    Raises :class:`Unsolvable` when the equations are inconsistent (least
    squares residual above ``REGULATOR_RESIDUAL_TOL``), which is exactly the
    failure of the regulation solvability assumption for this agent.
    """
    S = np.asarray(S, dtype=float)
    q = S.shape[0]
    if m.q != q:
        raise ValueError(f"agent expects q={m.q}, exosystem has q={q}")
    M, rhs = regulator_system(m, S)
    z, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    residual = np.abs(M @ z - rhs).max() if rhs.size else 0.0
    if residual > REGULATOR_RESIDUAL_TOL:
        raise Unsolvable(f"regulator equations are inconsistent "
                         f"(residual {residual:.3e})")
    nx, nu = m.nx, m.nu
    Pi = z[:nx * q].reshape((nx, q), order="F")
    Gamma = z[nx * q:].reshape((nu, q), order="F")
    return RegulatorSolution(Pi=Pi, Gamma=Gamma, nullity=M.shape[1] - rank)


def regulator_residuals(m: AgentModel, S, sol: RegulatorSolution):
    """Max-abs residuals of the two regulator equations for a solution."""
    S = np.asarray(S, dtype=float)
    r1 = sol.Pi @ S - m.A @ sol.Pi - m.B @ sol.Gamma - m.E
    r2 = m.Ce @ sol.Pi + m.De @ sol.Gamma + m.Fe
    return (np.abs(r1).max() if r1.size else 0.0,
            np.abs(r2).max() if r2.size else 0.0)


def _unstable_eigenvalues(A):
    return [lam for lam in linalg.eigenvalues(A)
            if lam.real >= -PBH_BOUNDARY]


def pbh_stabilizable(A, B) -> bool:
    """PBH test: rank [A - lam I, B] = n for every eigenvalue with
    Re(lam) >= -PBH_BOUNDARY (unstable or marginal modes)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n = A.shape[0]
    for lam in _unstable_eigenvalues(A):
        pencil = np.hstack([A - lam * np.eye(n), B]).astype(complex)
        if linalg.matrix_rank(pencil, REL_RANK_TOL) < n:
            return False
    return True


def pbh_detectable(C, A) -> bool:
    """Dual PBH test applied to (A^T, C^T)."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    return pbh_stabilizable(A.T, C.T)


def augment_leader(m: AgentModel, S):
    """Leader's augmented pair: Abar = [[A, E], [0, S]], Cbar = [C, F].

    Detectability of (Cbar, Abar) is what lets a leader reconstruct both its
    state and the exogenous signal from its own output."""
    if not m.is_leader:
        raise RoleMismatch("augmented pair is defined for leaders only")
    S = np.asarray(S, dtype=float)
    q = S.shape[0]
    Abar = np.block([[m.A, m.E], [np.zeros((q, m.nx)), S]])
    Cbar = np.hstack([m.C, m.F])
    return Abar, Cbar


def controllability_matrix(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def place_poles_single_input(A, b, desired):
    """Single-input pole placement via Ackermann's construction.

    Returns the 1 x n row k such that A + b k has the desired spectrum
    (``desired`` must be closed under conjugation).  Raises
    :class:`Uncontrollable` when the controllability matrix is rank
    deficient.  The dual observer form is :func:`place_observer_single_output`.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    b = np.asarray(b, dtype=float).reshape(n, 1)
    desired = [complex(lam) for lam in desired]
    if len(desired) != n:
        raise ValueError(f"need {n} desired eigenvalues, got {len(desired)}")
    ctrb = controllability_matrix(A, b)
    if linalg.matrix_rank(ctrb, REL_RANK_TOL) < n:
        raise Uncontrollable("controllability matrix is rank deficient")
    coeffs = np.poly(desired)
    if np.abs(coeffs.imag).max() > 1e-9 * max(1.0, np.abs(coeffs).max()):
        raise ValueError("desired spectrum is not closed under conjugation")
    coeffs = coeffs.real
    # p(A) by Horner
    pA = np.zeros((n, n))
    for c in coeffs:
        pA = A @ pA + c * np.eye(n)
    # last row of ctrb^{-1} p(A) gives the gain for A - b k; negate for A + b k
    k_acker = linalg.solve_linear(ctrb, pA)[-1, :]
    return -k_acker.reshape(1, n)


def place_observer_single_output(A, c, desired):
    """Dual of :func:`place_poles_single_input`: returns the n x 1 column L
    such that A + L c has the desired spectrum."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float).reshape(1, A.shape[0])
    k = place_poles_single_input(A.T, c.T, desired)
    return k.T


def default_controller_poles(n):
    """Spectra used by automatic synthesis: controller at -2, -3, ..."""
    return [-2.0 - j for j in range(n)]


def default_observer_poles(n):
    """Observer poles at -4, -5, ... (faster than the controller)."""
    return [-4.0 - j for j in range(n)]


def synthesize_gains(m: AgentModel, S) -> GainSet:
    """Automatic gain selection for single-input, single-output agents.

    Controller poles are placed at {-2, -3, ...}; observer poles at
    {-4, -5, ...}.  Leaders get their observer designed on the augmented
    pair, and the resulting column is split into L1 (state part) and L2
    (exogenous part).  Multi-input or multi-output agents must supply
    explicit gains instead.
    """
    if m.nu != 1:
        raise Uncontrollable("automatic synthesis handles single-input "
                             "agents only; supply explicit gains")
    if m.ny != 1:
        raise Uncontrollable("automatic synthesis handles single-output "
                             "agents only; supply explicit gains")
    K = place_poles_single_input(m.A, m.B, default_controller_poles(m.nx))
    if m.is_leader:
        Abar, Cbar = augment_leader(m, S)
        Lbar = place_observer_single_output(
            Abar, Cbar, default_observer_poles(Abar.shape[0]))
        return GainSet(K=K, L1=Lbar[:m.nx], L2=Lbar[m.nx:])
    L1 = place_observer_single_output(m.A, m.C,
                                      default_observer_poles(m.nx))
    return GainSet(K=K, L1=L1)


@dataclass
class GainCheck:
    """Closed-loop spectra for one agent's gains."""
    controller_max_real: float
    observer_max_real: float

    @property
    def stable(self):
        return self.controller_max_real < 0.0 and self.observer_max_real < 0.0


def validate_gains(m: AgentModel, S, g: GainSet) -> GainCheck:
    """Check that A + B K is stable, and that the observer matrix
    (A + L1 C for followers, the augmented pair closed by [L1; L2] for
    leaders) is stable."""
    ctrl = max(l.real for l in linalg.eigenvalues(m.A + m.B @ g.K))
    if m.is_leader:
        if g.L2 is None:
            raise RoleMismatch("leader gains need L2")
        Abar, Cbar = augment_leader(m, S)
        Lbar = np.vstack([g.L1, g.L2])
        obs = max(l.real for l in linalg.eigenvalues(Abar + Lbar @ Cbar))
    else:
        obs = max(l.real for l in linalg.eigenvalues(m.A + g.L1 @ m.C))
    return GainCheck(controller_max_real=ctrl, observer_max_real=obs)


@dataclass
class AgentCheck:
    """Per-agent assumption results."""
    index: int
    role: str
    stabilizable: bool
    detectable: bool
    regulator_solvable: bool
    regulator_residual: float = float("nan")
    regulator_nullity: int = 0

    @property
    def passed(self):
        return self.stabilizable and self.detectable and \
            self.regulator_solvable


@dataclass
class AssumptionReport:
    """Result of the per-agent and exosystem assumption checks."""
    agents: list = field(default_factory=list)
    exo_spectrum_marginal: bool = False
    exo_max_abs_real: float = float("nan")

    @property
    def passed(self):
        return self.exo_spectrum_marginal and \
            all(a.passed for a in self.agents)


def check_exosystem_spectrum(S, tol=None) -> tuple:
    """All eigenvalues of S must sit on the imaginary axis:
    |Re lam| <= tol * (1 + max|S|).  Returns (ok, max |Re lam|)."""
    S = np.asarray(S, dtype=float)
    tol = 1e-7 if tol is None else tol
    scale = 1.0 + (np.abs(S).max() if S.size else 0.0)
    worst = max((abs(l.real) for l in linalg.eigenvalues(S)), default=0.0)
    return worst <= tol * scale, worst


def validate_assumptions(models, exo: ExoSystem) -> AssumptionReport:
    """Run every per-agent solvability check plus the exosystem spectrum
    check, and collect the outcomes in an :class:`AssumptionReport`.

    Failures are reported, never raised: callers decide whether a failed
    certificate aborts the pipeline.
    """
    if not models:
        raise ValueError("need at least one agent")
    report = AssumptionReport()
    ok, worst = check_exosystem_spectrum(exo.S)
    report.exo_spectrum_marginal = ok
    report.exo_max_abs_real = worst
    for idx, m in enumerate(models):
        stab = pbh_stabilizable(m.A, m.B)
        if m.is_leader:
            Abar, Cbar = augment_leader(m, exo.S)
            det = pbh_detectable(Cbar, Abar)
        else:
            det = pbh_detectable(m.C, m.A)
        try:
            sol = solve_regulator_equations(m, exo.S)
            r1, r2 = regulator_residuals(m, exo.S, sol)
            check = AgentCheck(index=idx, role=m.role, stabilizable=stab,
                               detectable=det, regulator_solvable=True,
                               regulator_residual=max(r1, r2),
                               regulator_nullity=sol.nullity)
        except Unsolvable:
            check = AgentCheck(index=idx, role=m.role, stabilizable=stab,
                               detectable=det, regulator_solvable=False)
        report.agents.append(check)
    return report
