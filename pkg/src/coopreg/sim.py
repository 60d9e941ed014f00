"""Deterministic fixed-step orchestration of the closed loop.

``integrate`` advances the assembled closed-loop field with classic
fourth-order Runge-Kutta on a fixed grid.  Message events live on the grid:
at each grid point the payloads of messages sent there are captured first
(an estimate sampled at the send instant), then every message whose snapped
delivery time equals the point is applied to its edge, then the step is
taken.  Snapping a delivery to the next grid point perturbs its delay by at
most dt, and the integrator treats those instants as step boundaries, so the
piecewise-smooth field is never stepped across a discontinuity.

``run`` is the full pipeline: assumption certificates, graph certificates,
gain synthesis/validation, schedule generation, blackout audit, integration
and convergence metrics, aborting at the first failed certificate unless
forced.  Everything is deterministic given the scenario (bit-for-bit
reproducible traces).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import comms, graph, linalg, plant
from .closedloop import AgentLoop, ClosedLoop, error_coordinates
from .errors import CoopRegError, Diverged
from .scenario import Scenario, SimConfig  # noqa: F401  (re-exported)
from .tolerances import DIVERGENCE_LIMIT

_TIME_EPS = 1e-9


class _CachedExpm:
    """Memoized matrix exponential for grid-aligned staleness values.

    Stage times and send times both live on the half-step grid, so the
    predictor's staleness is always an integer number of half-steps (up to
    fp dust); the exponential is computed once per distinct count.
    """

    def __init__(self, half_dt):
        self.half = half_dt
        self.cache = {}

    def __call__(self, S, age):
        key = int(round(age / self.half))
        hit = self.cache.get(key)
        if hit is None:
            hit = linalg.expm(S, key * self.half)
            self.cache[key] = hit
        return hit


@dataclass
class SimTrace:
    """Recorded run: decimated state/input/error series plus the full
    delivery event log.

    Per-agent series are lists indexed by agent, each holding an array with
    one row per recorded sample.  ``kx`` maps every edge to the receiver's
    sequence-number series (-1 before the first delivery).  ``events`` is
    [(time, edge, k), ...] for every applied delivery, and
    ``first_delivery`` records when each edge first carried data (inf if
    never), which is exactly how long the no-data skip rule was active.
    """
    times: np.ndarray
    upsilon: np.ndarray
    x: list
    xhat: list
    upsilon_hat: list
    u: list
    e: list
    eps: list
    x_tilde: list
    v_tilde: list
    kx: dict
    events: list
    first_delivery: dict

    @property
    def horizon(self):
        return float(self.times[-1])

    def error_magnitude(self, i):
        """max-abs regulated error of agent i at each recorded sample."""
        return np.abs(self.e[i]).max(axis=1)


def _build_loops(scenario: Scenario):
    if scenario.gains is None:
        raise ValueError("scenario gains are unresolved; run() synthesizes "
                         "them or supply explicit gains")
    loops = []
    for m, g in zip(scenario.agents, scenario.gains):
        loops.append(AgentLoop(
            model=m, gains=g,
            reg=plant.solve_regulator_equations(m, scenario.exo.S)))
    return loops


def integrate(scenario: Scenario, schedules: dict) -> SimTrace:
    """Fixed-step RK4 integration of the full closed loop.

    ``schedules`` maps every edge with positive weight to its Message list
    (payloads are filled in here at the send instants).  Raises
    :class:`Diverged` when any state leaves the divergence ball.
    """
    scenario.sim.validate_against_channel(scenario.channel)
    dt = scenario.sim.dt
    half = 0.5 * dt
    nsteps = int(math.floor(scenario.sim.horizon / dt + _TIME_EPS))
    record_every = scenario.sim.record_every

    loops = _build_loops(scenario)
    cache = _CachedExpm(half)
    loop = ClosedLoop(loops, scenario.exo.S, scenario.adjacency,
                      expm_fn=cache)

    # event tables: grid index -> messages sent / delivered there
    sends_at = {}
    deliveries_at = {}
    for edge in sorted(schedules):
        for msg in schedules[edge]:
            send_idx = int(round(msg.send_time / dt))
            if msg.lost or send_idx > nsteps:
                continue
            d_idx = int(math.ceil(msg.delivery_time / dt - _TIME_EPS))
            if d_idx > nsteps:
                continue  # arrives after the horizon; never applied
            sends_at.setdefault(send_idx, []).append(msg)
            deliveries_at.setdefault(d_idx, []).append(msg)
    for msgs in deliveries_at.values():
        msgs.sort(key=lambda m: (m.edge, m.k))

    # initial conditions: plant at x0, observers/estimates at zero unless
    # the scenario warm-starts them
    y = np.zeros(loop.dim)
    for i, model in enumerate(scenario.agents):
        y[loop.off_x[i]:loop.off_x[i] + model.nx] = scenario.x0[i]
        if scenario.xhat0 is not None:
            y[loop.off_xhat[i]:loop.off_xhat[i] + model.nx] = \
                scenario.xhat0[i]
        if scenario.upsilon_hat0 is not None:
            y[loop.off_vhat[i]:loop.off_vhat[i] + scenario.q] = \
                scenario.upsilon_hat0[i]
    y[loop.off_upsilon:] = scenario.exo.upsilon0

    n_records = 1 + nsteps // record_every
    q = scenario.q
    times = np.empty(n_records)
    upsilon_rec = np.empty((n_records, q))
    x_rec = [np.empty((n_records, m.nx)) for m in scenario.agents]
    xhat_rec = [np.empty((n_records, m.nx)) for m in scenario.agents]
    vhat_rec = [np.empty((n_records, q)) for m in scenario.agents]
    u_rec = [np.empty((n_records, m.nu)) for m in scenario.agents]
    e_rec = [np.empty((n_records, m.pe)) for m in scenario.agents]
    eps_rec = [np.empty((n_records, m.nx)) for m in scenario.agents]
    xt_rec = [np.empty((n_records, m.nx)) for m in scenario.agents]
    vt_rec = [np.empty((n_records, q)) for m in scenario.agents]
    kx_rec = {edge: np.full(n_records, -1, dtype=int)
              for edge in loop.edge_states}
    events = []
    first_delivery = {edge: math.inf for edge in loop.edge_states}

    rec = 0
    for j in range(nsteps + 1):
        t = j * dt
        for msg in sends_at.get(j, ()):
            msg.payload = loop.upsilon_hat_of(y, msg.edge[0])
        for msg in deliveries_at.get(j, ()):
            loop.apply_delivery(msg.edge, msg, now=t)
            events.append((t, msg.edge, msg.k))
            if first_delivery[msg.edge] == math.inf:
                first_delivery[msg.edge] = t
        worst = np.abs(y).max()
        if not np.isfinite(worst) or worst > DIVERGENCE_LIMIT:
            raise Diverged(t, worst)
        if j % record_every == 0:
            states, ups = loop.unpack(y)
            times[rec] = t
            upsilon_rec[rec] = ups
            for i, al in enumerate(loops):
                s = states[i]
                u = al.gains.K @ (s.xhat - al.reg.Pi @ s.upsilon_hat) \
                    + al.reg.Gamma @ s.upsilon_hat
                coords = error_coordinates(al.model, al.reg, s, ups, u)
                x_rec[i][rec] = s.x
                xhat_rec[i][rec] = s.xhat
                vhat_rec[i][rec] = s.upsilon_hat
                u_rec[i][rec] = u
                e_rec[i][rec] = coords.e
                eps_rec[i][rec] = coords.eps
                xt_rec[i][rec] = coords.x_tilde
                vt_rec[i][rec] = coords.v_tilde
            for edge, state in loop.edge_states.items():
                kx_rec[edge][rec] = -1 if state.kx is None else state.kx
            rec += 1
        if j == nsteps:
            break
        k1 = loop.rhs(t, y)
        k2 = loop.rhs(t + half, y + half * k1)
        k3 = loop.rhs(t + half, y + half * k2)
        k4 = loop.rhs(t + dt, y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    return SimTrace(times=times, upsilon=upsilon_rec, x=x_rec,
                    xhat=xhat_rec, upsilon_hat=vhat_rec, u=u_rec, e=e_rec,
                    eps=eps_rec, x_tilde=xt_rec, v_tilde=vt_rec, kx=kx_rec,
                    events=events, first_delivery=first_delivery)


# ---------------------------------------------------------------------------
# convergence metrics

@dataclass
class AgentConvergence:
    """Tail supremum and fitted decay rate of one agent's regulated error."""
    sup_tail: float
    decay_rate: float


def fit_log_slope(times, values, t_lo=None, t_hi=None, windows=20):
    """Least-squares slope of log(window max of |values|) over time.

    The series is split into equal windows inside [t_lo, t_hi]; windows
    whose maximum is zero are dropped (log undefined).  Returns 0.0 when
    fewer than two windows survive."""
    times = np.asarray(times, dtype=float)
    mags = np.abs(np.asarray(values, dtype=float))
    if mags.ndim > 1:
        mags = mags.max(axis=1)
    lo = times[0] if t_lo is None else t_lo
    hi = times[-1] if t_hi is None else t_hi
    mask = (times >= lo - _TIME_EPS) & (times <= hi + _TIME_EPS)
    times, mags = times[mask], mags[mask]
    if times.size < 2:
        return 0.0
    edges = np.linspace(times[0], times[-1], windows + 1)
    centers, peaks = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (times >= a) & (times <= b)
        if not sel.any():
            continue
        peak = mags[sel].max()
        if peak > 0.0:
            centers.append(0.5 * (a + b))
            peaks.append(peak)
    if len(peaks) < 2:
        return 0.0
    centers = np.asarray(centers)
    logs = np.log(np.asarray(peaks))
    A = np.vstack([centers, np.ones_like(centers)]).T
    slope, _ = np.linalg.lstsq(A, logs, rcond=None)[0]
    return float(slope)


def convergence_metrics(trace: SimTrace, tail_fraction=0.2) -> list:
    """Per-agent (tail supremum, decay rate) of the regulated error.

    The tail supremum is the max |e| over the final ``tail_fraction`` of
    the horizon; the decay rate is the fitted slope of the log windowed
    maxima over the whole run (negative means decay)."""
    out = []
    t_end = trace.times[-1]
    tail_start = t_end - tail_fraction * (t_end - trace.times[0])
    tail = trace.times >= tail_start - _TIME_EPS
    for i in range(len(trace.e)):
        mags = trace.error_magnitude(i)
        sup_tail = float(mags[tail].max()) if tail.any() else float("nan")
        rate = fit_log_slope(trace.times, trace.e[i])
        out.append(AgentConvergence(sup_tail=sup_tail, decay_rate=rate))
    return out


# ---------------------------------------------------------------------------
# pipeline

@dataclass
class EdgeCommsSummary:
    edge: tuple
    sent: int
    delivered: int
    lost: int
    forced: int
    max_gap: float


@dataclass
class RunReport:
    """Certificates and outcomes of one pipeline run.

    Fields stay None until their stage executes; ``aborted_stage`` holds the
    name of the certificate that failed when the pipeline stopped early."""
    scenario_name: str
    forced_run: bool = False
    assumptions: plant.AssumptionReport = None
    assumption4_ok: bool = None
    lemma1: graph.Lemma1Report = None
    rho_small_gain: float = None
    gain_checks: list = None
    comms_summary: list = None
    blackout_bound_ok: bool = None
    convergence: list = None
    converged: bool = None
    convergence_threshold: float = 0.05
    skip_rule_spans: dict = None
    aborted_stage: str = None
    abort_reason: str = None

    @property
    def completed(self):
        return self.aborted_stage is None

    @property
    def certificates_passed(self):
        checks = [
            self.assumptions is not None and self.assumptions.passed,
            bool(self.assumption4_ok),
            self.lemma1 is not None and self.lemma1.passed,
            self.rho_small_gain is not None and self.rho_small_gain < 1.0,
            self.gain_checks is not None and
            all(c.stable for _, c in self.gain_checks),
            bool(self.blackout_bound_ok),
        ]
        return all(checks)

    def to_text(self):
        lines = [f"scenario: {self.scenario_name}"]
        if self.completed:
            lines.append("status: completed")
        else:
            lines.append(f"status: aborted at stage '{self.aborted_stage}' "
                         f"({self.abort_reason})")
        if self.forced_run:
            lines.append("note: certificate failures overridden by --force")

        def mark(ok):
            return "pass" if ok else "FAIL"

        if self.assumptions is not None:
            lines.append("")
            lines.append("[dynamics certificates]")
            for chk in self.assumptions.agents:
                reg = ("ok (residual {:.2e}, nullity {})".format(
                    chk.regulator_residual, chk.regulator_nullity)
                    if chk.regulator_solvable else "FAIL (inconsistent)")
                lines.append(
                    f"  agent {chk.index} ({chk.role}): "
                    f"stabilizable={mark(chk.stabilizable)} "
                    f"detectable={mark(chk.detectable)} regulator={reg}")
            lines.append(
                f"  exosystem spectrum on imaginary axis: "
                f"{mark(self.assumptions.exo_spectrum_marginal)} "
                f"(max |Re| = {self.assumptions.exo_max_abs_real:.2e})")
        if self.assumption4_ok is not None:
            lines.append("")
            lines.append("[graph certificates]")
            lines.append(f"  leader reachability: "
                         f"{mark(self.assumption4_ok)}")
            if self.lemma1 is not None:
                lines.append(f"  follower block is a nonsingular M-matrix: "
                             f"{mark(self.lemma1.m_matrix)} "
                             f"(min Re eig = "
                             f"{self.lemma1.min_real_eigenvalue:.4g})")
                if self.lemma1.computed_inverse_checks:
                    lines.append(
                        f"  -L1^-1 L2 nonnegative: "
                        f"{mark(self.lemma1.nonnegative)} "
                        f"(min entry {self.lemma1.min_entry:.2e})")
                    lines.append(
                        f"  -L1^-1 L2 row sums = 1: "
                        f"{mark(self.lemma1.row_sums_one)} "
                        f"(max deviation "
                        f"{self.lemma1.max_row_sum_deviation:.2e})")
            if self.rho_small_gain is not None:
                lines.append(f"  small-gain spectral radius: "
                             f"{self.rho_small_gain:.6f} "
                             f"{mark(self.rho_small_gain < 1.0)} (< 1)")
        if self.gain_checks is not None:
            lines.append("")
            lines.append("[gain certificates]")
            for idx, chk in self.gain_checks:
                lines.append(
                    f"  agent {idx}: controller max Re = "
                    f"{chk.controller_max_real:.4g}, observer max Re = "
                    f"{chk.observer_max_real:.4g} -> {mark(chk.stable)}")
        if self.comms_summary is not None:
            lines.append("")
            lines.append("[communication]")
            for s in self.comms_summary:
                lines.append(
                    f"  edge {s.edge[0]}->{s.edge[1]}: sent={s.sent} "
                    f"delivered={s.delivered} lost={s.lost} "
                    f"forced={s.forced} max gap={s.max_gap:.3f} s")
            if self.blackout_bound_ok is not None:
                lines.append(f"  blackout bound respected: "
                             f"{mark(self.blackout_bound_ok)}")
        if self.skip_rule_spans:
            lines.append("")
            lines.append("[no-data skip rule]")
            for edge, t0 in sorted(self.skip_rule_spans.items()):
                span = ("never received data" if math.isinf(t0)
                        else f"active until t={t0:.3f} s")
                lines.append(f"  edge {edge[0]}->{edge[1]}: {span}")
        if self.convergence is not None:
            lines.append("")
            lines.append("[convergence]")
            for i, c in enumerate(self.convergence):
                lines.append(
                    f"  agent {i}: sup|e| over final 20% = "
                    f"{c.sup_tail:.3e}, fitted log-slope = "
                    f"{c.decay_rate:.3f} /s")
            lines.append(
                f"  verdict: "
                f"{'converged' if self.converged else 'NOT converged'} "
                f"(threshold {self.convergence_threshold})")
        lines.append("")
        return "\n".join(lines)


def generate_all_schedules(scenario: Scenario) -> dict:
    """One schedule per positive-weight edge over the scenario horizon."""
    schedules = {}
    adjacency = scenario.adjacency
    for i in range(scenario.n):
        for j in np.nonzero(adjacency[i])[0]:
            edge = (int(j), int(i))
            schedules[edge] = comms.generate_schedule(
                scenario.channel, scenario.sim.horizon, edge)
    return schedules


def run(scenario: Scenario, force=False, schedules=None,
        certificates_only=False):
    """Full pipeline: certificates, schedules, integration, metrics.

    Returns (trace, report); the trace is None when a certificate failed
    and ``force`` was not set.  With ``force`` the pipeline records failed
    certificates in the report and simulates anyway (divergence is then
    detected and reported rather than raised).  ``certificates_only`` stops
    after the blackout audit, which is what the verify command runs."""
    report = RunReport(scenario_name=scenario.name, forced_run=force)

    def abort(stage, reason):
        report.aborted_stage = stage
        report.abort_reason = reason
        return None, report

    # dynamics certificates
    report.assumptions = plant.validate_assumptions(scenario.agents,
                                                    scenario.exo)
    if not report.assumptions.passed and not force:
        return abort("assumptions", "agent dynamics or exosystem spectrum "
                                    "failed a solvability check")

    # graph certificates
    topo = scenario.topology()
    report.assumption4_ok = graph.check_assumption4(topo)
    if not report.assumption4_ok and not force:
        return abort("graph", "leader reachability fails")
    try:
        blocks = graph.build_laplacian(topo)
        report.lemma1 = graph.check_lemma1(blocks, tol=scenario.tolerance)
        if report.lemma1.m_matrix:
            report.rho_small_gain = linalg.spectral_radius(
                graph.small_gain_matrix(blocks))
    except CoopRegError as exc:
        if not force:
            return abort("graph", str(exc))
    lemma_ok = report.lemma1 is not None and report.lemma1.passed
    rho_ok = report.rho_small_gain is not None and \
        report.rho_small_gain < 1.0
    if not (lemma_ok and rho_ok) and not force:
        return abort("graph", "follower-block M-matrix or small-gain "
                              "certificate fails")

    # gains
    resolved = scenario
    if scenario.gains is None:
        try:
            gains = [plant.synthesize_gains(m, scenario.exo.S)
                     for m in scenario.agents]
        except CoopRegError as exc:
            return abort("gains", f"automatic synthesis failed: {exc}")
        resolved = replace(scenario, gains=gains)
    report.gain_checks = [
        (idx, plant.validate_gains(m, scenario.exo.S, g))
        for idx, (m, g) in enumerate(zip(resolved.agents, resolved.gains))]
    if not all(c.stable for _, c in report.gain_checks) and not force:
        return abort("gains", "a closed-loop or observer matrix is not "
                              "stable with the supplied gains")

    # communication schedules + blackout audit
    if schedules is None:
        schedules = generate_all_schedules(resolved)
    try:
        gaps = comms.audit_blackouts(
            [m for msgs in schedules.values() for m in msgs],
            resolved.sim.horizon)
    except CoopRegError as exc:
        if not force:
            return abort("blackout-audit", str(exc))
        gaps = {}
    summary = []
    for edge in sorted(schedules):
        msgs = schedules[edge]
        summary.append(EdgeCommsSummary(
            edge=edge, sent=len(msgs),
            delivered=sum(1 for m in msgs if not m.lost),
            lost=sum(1 for m in msgs if m.lost),
            forced=sum(1 for m in msgs if m.forced),
            max_gap=gaps.get(edge, math.inf)))
    report.comms_summary = summary
    h_star = resolved.channel.h_star
    report.blackout_bound_ok = bool(gaps) and all(
        s.max_gap <= h_star + 1e-9 for s in summary)
    if not report.blackout_bound_ok and not force:
        return abort("blackout-audit",
                     "a schedule violates the blackout bound")

    if certificates_only:
        return None, report

    # integration
    try:
        trace = integrate(resolved, schedules)
    except Diverged as exc:
        report.aborted_stage = "integration"
        report.abort_reason = str(exc)
        return None, report
    report.skip_rule_spans = dict(trace.first_delivery)

    # metrics
    report.convergence = convergence_metrics(trace)
    report.converged = all(c.sup_tail < report.convergence_threshold
                           for c in report.convergence)
    return trace, report
