"""Directed interconnection topology and its certificates.

Agents are ordered followers-first: indices 0..m-1 are followers, m..n-1 are
leaders.  ``adjacency[i, j] = a_ij > 0`` means agent i receives from agent j.
The module builds the Laplacian block structure, checks leader reachability,
and verifies the two facts the convergence argument rests on: the follower
block L1 is a nonsingular M-matrix, and the normalized coupling matrix
``I - D^{-1} L1`` has spectral radius below one.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import LeaderHasInEdge, ZeroInDegree
from .tolerances import LEMMA_NONNEG_TOL, global_tol


@dataclass
class Topology:
    """Weighted directed graph over n agents, the first m being followers.

    Invariants: zero diagonal, nonnegative weights, and (once validated)
    all-zero leader rows, since leaders accept no incoming edges.
    """
    n: int
    m: int
    adjacency: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        if A.shape != (self.n, self.n):
            raise ValueError(f"adjacency must be {self.n}x{self.n}, "
                             f"got {A.shape}")
        if not (0 < self.m < self.n):
            raise ValueError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        if (A < 0).any():
            raise ValueError("edge weights must be nonnegative")
        if np.abs(np.diag(A)).max() > 0:
            raise ValueError("self-loops are not allowed (a_ii must be 0)")
        self.adjacency = A

    def edges(self):
        """All (j, i) pairs with a_ij > 0, i.e. j can send to i."""
        receivers, senders = np.nonzero(self.adjacency)
        return [(int(j), int(i)) for i, j in zip(receivers, senders)]

    def in_weights(self, i):
        """Incoming weight row of agent i as [(j, a_ij), ...]."""
        row = self.adjacency[i]
        return [(int(j), float(row[j])) for j in np.nonzero(row)[0]]


@dataclass
class LaplacianBlocks:
    """Laplacian of a leader-follower graph, partitioned as

        L = [[L1, L2],
             [0,  0 ]]

    with L1 (m x m) coupling followers to followers, L2 (m x (n-m)) coupling
    followers to leaders, and D = diag(kappa_i) holding follower in-degrees.
    """
    L: np.ndarray
    L1: np.ndarray
    L2: np.ndarray
    D: np.ndarray


def build_laplacian(t: Topology) -> LaplacianBlocks:
    """Assemble L = diag(row sums) - adjacency and slice its blocks.

    Raises :class:`LeaderHasInEdge` when some leader row of the adjacency is
    nonzero, because then the bottom rows of L would not vanish.
    """
    A = t.adjacency
    leader_rows = A[t.m:]
    if leader_rows.size and np.abs(leader_rows).max() > 0:
        bad = t.m + int(np.argmax(np.abs(leader_rows).max(axis=1) > 0))
        raise LeaderHasInEdge(f"leader {bad} has an incoming edge")
    kappa = A.sum(axis=1)
    L = np.diag(kappa) - A
    return LaplacianBlocks(L=L, L1=L[:t.m, :t.m], L2=L[:t.m, t.m:],
                           D=np.diag(kappa[:t.m]))


def check_assumption4(t: Topology) -> bool:
    """Leader-reachability condition.

    True iff no leader has an incoming edge and every follower can be reached
    from at least one leader along directed edges (breadth-first search in
    the sender-to-receiver direction)."""
    A = t.adjacency
    if A[t.m:].size and np.abs(A[t.m:]).max() > 0:
        return False
    reached = set(range(t.m, t.n))
    frontier = list(reached)
    while frontier:
        j = frontier.pop()
        for i in np.nonzero(A[:, j])[0]:
            if i not in reached:
                reached.add(int(i))
                frontier.append(int(i))
    return all(i in reached for i in range(t.m))


@dataclass
class Lemma1Report:
    """Outcome of the three M-matrix facts about the follower block.

    (a) L1 has nonpositive off-diagonals and spectrum in the open right half
    plane; (b) every entry of -L1^{-1} L2 is nonnegative; (c) each of its
    rows sums to one.  (b) and (c) are only computed when (a) holds, since
    they require inverting L1."""
    m_matrix: bool
    min_real_eigenvalue: float
    nonnegative: bool = False
    min_entry: float = float("nan")
    row_sums_one: bool = False
    max_row_sum_deviation: float = float("nan")
    computed_inverse_checks: bool = False

    @property
    def passed(self):
        return self.m_matrix and self.nonnegative and self.row_sums_one


def check_lemma1(b: LaplacianBlocks, tol=None) -> Lemma1Report:
    """Verify the M-matrix facts for the follower Laplacian block.

    When the eigenvalue test already fails (some Re(lam) <= 0, e.g. a
    follower with no incoming edges), the report comes back failed without
    attempting the inversion; :class:`Singular` is only raised if a solve is
    attempted and breaks down anyway.
    """
    tol = global_tol() if tol is None else tol
    L1, L2 = b.L1, b.L2
    off = L1 - np.diag(np.diag(L1))
    offdiag_ok = off.max() <= 0 if off.size else True
    scale = max(np.abs(L1).max(), 1.0)
    min_real = min((l.real for l in linalg.eigenvalues(L1)), default=0.0)
    m_matrix = offdiag_ok and min_real > tol * scale
    report = Lemma1Report(m_matrix=m_matrix, min_real_eigenvalue=min_real)
    if not m_matrix:
        return report
    X = linalg.solve_linear(L1, -L2)  # may raise Singular on breakdown
    report.computed_inverse_checks = True
    report.min_entry = float(X.min()) if X.size else 0.0
    report.nonnegative = report.min_entry >= -LEMMA_NONNEG_TOL
    sums = X.sum(axis=1)
    report.max_row_sum_deviation = float(np.abs(sums - 1.0).max()) \
        if sums.size else 0.0
    report.row_sums_one = report.max_row_sum_deviation <= tol
    return report


def small_gain_matrix(b: LaplacianBlocks) -> np.ndarray:
    """Normalized follower coupling Gamma = I - D^{-1} L1.

    Its entries are a_ij / kappa_i off the diagonal and zero on it; spectral
    radius below one is the small-gain certificate for the distributed
    estimator.  Raises :class:`ZeroInDegree` when some follower has
    kappa_i = 0."""
    kappa = np.diag(b.D)
    if (kappa <= 0).any():
        bad = int(np.argmax(kappa <= 0))
        raise ZeroInDegree(f"follower {bad} has zero in-degree")
    m = b.L1.shape[0]
    return np.eye(m) - (b.L1 / kappa[:, None])
