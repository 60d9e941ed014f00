"""Scenario files: the single canonical configuration format.

A scenario is a YAML document with five required sections (exosystem,
agents, graph, channel, sim) plus optional gains, initial conditions,
tolerance and output directory.  Agents must be listed followers first.
Matrices are written as row lists.  The emitter in this module produces a
canonical, byte-stable rendering so presets and regression baselines stay
diffable, and parsing an emitted file reproduces the in-memory scenario
exactly.
"""

from dataclasses import dataclass, replace

import numpy as np
import yaml

from .comms import ChannelParams
from .errors import DimensionError, OrderError, ParseError
from .graph import Topology
from .plant import FOLLOWER, LEADER, AgentModel, ExoSystem, GainSet
from .tolerances import global_tol

# RNG stream tag for drawing missing initial conditions; far outside any
# agent index so it never collides with the per-edge channel streams.
_X0_STREAM = 10 ** 6


@dataclass
class SimConfig:
    """Fixed-step integration settings.

    The channel sampling period must be an integer multiple of dt (messages
    are sent and snapped on the grid), and the horizon must span at least
    ten sampling periods to make the communication process meaningful."""
    dt: float
    horizon: float
    record_every: int = 10

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    def validate_against_channel(self, channel: ChannelParams):
        ratio = channel.ts / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(
                f"channel ts={channel.ts} is not an integer multiple "
                f"of dt={self.dt}")
        if self.horizon < 10 * channel.ts - 1e-9:
            raise ValueError(
                f"horizon {self.horizon} must cover at least ten sampling "
                f"periods ({10 * channel.ts})")


@dataclass
class Scenario:
    """Everything one run needs, fully resolved and validated."""
    name: str
    agents: list
    exo: ExoSystem
    adjacency: np.ndarray
    gains: list          # list of GainSet, or None for automatic synthesis
    channel: ChannelParams
    sim: SimConfig
    x0: list             # per-agent initial plant states
    xhat0: list = None   # per-agent initial observer states (default zero)
    upsilon_hat0: list = None  # per-agent initial estimates (default zero)
    tolerance: float = None
    output_dir: str = None

    def __post_init__(self):
        self.tolerance = global_tol() if self.tolerance is None \
            else float(self.tolerance)
        roles = [a.role for a in self.agents]
        first_leader = roles.index(LEADER) if LEADER in roles else len(roles)
        for idx in range(first_leader, len(roles)):
            if roles[idx] == FOLLOWER:
                raise OrderError(
                    f"agent {idx} is a follower listed after a leader; "
                    f"agents must be listed followers first")

    @property
    def n(self):
        return len(self.agents)

    @property
    def m(self):
        return sum(1 for a in self.agents if a.role == FOLLOWER)

    @property
    def q(self):
        return self.exo.q

    def topology(self) -> Topology:
        return Topology(n=self.n, m=self.m, adjacency=self.adjacency)

    def with_overrides(self, seed=None, h_star=None, horizon=None):
        """Copy with CLI-level overrides applied (revalidated)."""
        out = replace(self)
        if seed is not None or h_star is not None:
            kwargs = {}
            if seed is not None:
                kwargs["seed"] = int(seed)
            if h_star is not None:
                kwargs["h_star"] = float(h_star)
            out.channel = replace(self.channel, **kwargs)
        if horizon is not None:
            out.sim = replace(self.sim, horizon=float(horizon))
        out.sim.validate_against_channel(out.channel)
        return out


# ---------------------------------------------------------------------------
# parsing

_AGENT_MATRICES = ("A", "B", "C", "D", "E", "F", "Ce", "De", "Fe")
_CHANNEL_FIELDS = ("ts", "p_transmit", "p_loss", "delay_min", "delay_max",
                   "h_star", "seed")


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ParseError(f"missing field {key!r} in {where}")
    return mapping[key]


def _as_matrix(value, where):
    try:
        M = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where} is not a numeric matrix: {exc}") from exc
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ParseError(f"{where} must be a matrix (list of rows)")
    if not np.all(np.isfinite(M)):
        raise ParseError(f"{where} has non-finite entries")
    return M


def _check_shape(M, rows, cols, where):
    if M.shape != (rows, cols):
        raise DimensionError(
            f"{where} has shape {M.shape[0]}x{M.shape[1]}, "
            f"expected {rows}x{cols}")
    return M


def _parse_agent(entry, idx, q):
    where = f"agent {idx}"
    role = _require(entry, "role", where)
    if role not in (LEADER, FOLLOWER):
        raise ParseError(f"{where}: role must be 'leader' or 'follower', "
                         f"got {role!r}")
    mats = {}
    for key in _AGENT_MATRICES:
        mats[key] = _as_matrix(_require(entry, key, where),
                               f"{where}: {key}")
    A = mats["A"]
    nx = A.shape[0]
    _check_shape(A, nx, nx, f"{where}: A")
    nu = mats["B"].shape[1]
    _check_shape(mats["B"], nx, nu, f"{where}: B")
    ny = mats["C"].shape[0]
    _check_shape(mats["C"], ny, nx, f"{where}: C")
    _check_shape(mats["D"], ny, nu, f"{where}: D")
    _check_shape(mats["E"], nx, q, f"{where}: E")
    _check_shape(mats["F"], ny, q, f"{where}: F")
    pe = mats["Ce"].shape[0]
    _check_shape(mats["Ce"], pe, nx, f"{where}: Ce")
    _check_shape(mats["De"], pe, nu, f"{where}: De")
    _check_shape(mats["Fe"], pe, q, f"{where}: Fe")
    model = AgentModel(role=role, **mats)

    def _state_vec(key, length):
        value = entry.get(key)
        if value is None:
            return None
        vec = np.asarray(value, dtype=float).reshape(-1)
        if vec.shape != (length,):
            raise DimensionError(f"{where}: {key} has length "
                                 f"{vec.shape[0]}, expected {length}")
        return vec

    x0 = _state_vec("x0", nx)
    xhat0 = _state_vec("xhat0", nx)
    vhat0 = _state_vec("upsilonhat0", q)

    gains = entry.get("gains")
    if gains is not None:
        K = _check_shape(_as_matrix(_require(gains, "K", f"{where} gains"),
                                    f"{where}: gains.K"), nu, nx,
                         f"{where}: gains.K")
        L1 = _check_shape(_as_matrix(_require(gains, "L1", f"{where} gains"),
                                     f"{where}: gains.L1"), nx, ny,
                          f"{where}: gains.L1")
        L2 = None
        if role == LEADER:
            L2 = _check_shape(
                _as_matrix(_require(gains, "L2", f"{where} gains"),
                           f"{where}: gains.L2"), q, ny,
                f"{where}: gains.L2")
        elif "L2" in gains:
            raise ParseError(f"{where}: followers must not carry L2")
        gains = GainSet(K=K, L1=L1, L2=L2)
    return model, x0, xhat0, vhat0, gains


def parse_scenario(path) -> Scenario:
    """Load and fully validate a scenario file.

    Raises :class:`ParseError` for malformed documents, ``DimensionError``
    for inconsistent matrix shapes (naming the agent and field), and
    ``OrderError`` when agents are not listed followers first.  Missing
    initial conditions are drawn uniformly from [-1, 1] using a dedicated
    stream of the scenario seed, so the resolved scenario is deterministic.
    """
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: scenario must be a YAML mapping "
                         f"(file empty or malformed)")

    exo_doc = _require(doc, "exosystem", "scenario")
    S = _as_matrix(_require(exo_doc, "S", "exosystem"), "exosystem: S")
    if S.shape[0] != S.shape[1]:
        raise DimensionError(f"exosystem: S must be square, got "
                             f"{S.shape[0]}x{S.shape[1]}")
    q = S.shape[0]
    upsilon0 = np.asarray(_require(exo_doc, "upsilon0", "exosystem"),
                          dtype=float).reshape(-1)
    if upsilon0.shape != (q,):
        raise DimensionError(f"exosystem: upsilon0 has length "
                             f"{upsilon0.shape[0]}, expected {q}")
    exo = ExoSystem(S=S, upsilon0=upsilon0)

    agents_doc = _require(doc, "agents", "scenario")
    if not isinstance(agents_doc, list) or not agents_doc:
        raise ParseError("scenario: agents must be a nonempty list")
    parsed = [_parse_agent(entry, idx, q)
              for idx, entry in enumerate(agents_doc)]
    agents = [p[0] for p in parsed]
    n = len(agents)
    m = sum(1 for a in agents if a.role == FOLLOWER)
    if not (0 < m < n):
        raise ParseError(f"scenario needs at least one follower and one "
                         f"leader (got {m} followers of {n} agents)")

    graph_doc = _require(doc, "graph", "scenario")
    adjacency = _as_matrix(_require(graph_doc, "adjacency", "graph"),
                           "graph: adjacency")
    if adjacency.shape != (n, n):
        raise DimensionError(f"graph: adjacency has shape "
                             f"{adjacency.shape[0]}x{adjacency.shape[1]}, "
                             f"expected {n}x{n}")

    channel_doc = _require(doc, "channel", "scenario")
    channel_kwargs = {}
    for key in _CHANNEL_FIELDS:
        raw = _require(channel_doc, key, "channel")
        try:
            channel_kwargs[key] = int(raw) if key == "seed" else float(raw)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"channel: {key} is not a number: "
                             f"{raw!r}") from exc
    channel_kwargs["enforce_bound"] = bool(
        channel_doc.get("enforce_blackout_bound", True))
    try:
        channel = ChannelParams(**channel_kwargs)
    except ValueError as exc:
        raise ParseError(f"channel: {exc}") from exc

    sim_doc = _require(doc, "sim", "scenario")
    try:
        sim = SimConfig(dt=float(_require(sim_doc, "dt", "sim")),
                        horizon=float(_require(sim_doc, "horizon", "sim")),
                        record_every=int(sim_doc.get("record_every", 10)))
        sim.validate_against_channel(channel)
    except ValueError as exc:
        raise ParseError(f"sim: {exc}") from exc

    mode = doc.get("gains", "explicit")
    if mode not in ("explicit", "auto"):
        raise ParseError(f"gains must be 'explicit' or 'auto', got {mode!r}")
    if mode == "auto":
        gains = None
        for idx, p in enumerate(parsed):
            if p[4] is not None:
                raise ParseError(f"agent {idx} carries explicit gains but "
                                 f"the scenario says gains: auto")
    else:
        gains = []
        for idx, p in enumerate(parsed):
            if p[4] is None:
                raise ParseError(f"agent {idx} is missing gains (scenario "
                                 f"says gains: explicit)")
            gains.append(p[4])

    x0 = []
    for idx, (model, maybe_x0, _, _, _) in enumerate(parsed):
        if maybe_x0 is not None:
            x0.append(maybe_x0)
        else:
            rng = np.random.default_rng([channel.seed, _X0_STREAM, idx])
            x0.append(rng.uniform(-1.0, 1.0, size=model.nx))

    xhat0 = None
    if any(p[2] is not None for p in parsed):
        xhat0 = [p[2] if p[2] is not None else np.zeros(p[0].nx)
                 for p in parsed]
    upsilon_hat0 = None
    if any(p[3] is not None for p in parsed):
        upsilon_hat0 = [p[3] if p[3] is not None else np.zeros(q)
                        for p in parsed]

    try:
        Topology(n=n, m=m, adjacency=adjacency)  # structural validation
    except ValueError as exc:
        raise ParseError(f"graph: {exc}") from exc
    return Scenario(
        name=str(doc.get("name", "scenario")),
        agents=agents, exo=exo, adjacency=adjacency, gains=gains,
        channel=channel, sim=sim, x0=x0, xhat0=xhat0,
        upsilon_hat0=upsilon_hat0,
        tolerance=doc.get("tolerance"),
        output_dir=doc.get("output_dir"))


# ---------------------------------------------------------------------------
# canonical emission

def _fmt_float(v):
    # YAML 1.1 floats need a dot in the mantissa; bare '1e-08' would read
    # back as a string.
    text = repr(float(v))
    if "e" in text and "." not in text:
        text = text.replace("e", ".0e")
    return text


def _fmt_vector(vec):
    return "[" + ", ".join(_fmt_float(v) for v in np.asarray(vec).ravel()) \
        + "]"


def _fmt_matrix(M):
    rows = [_fmt_vector(row) for row in np.atleast_2d(np.asarray(M))]
    return "[" + ", ".join(rows) + "]"


def scenario_to_yaml(sc: Scenario) -> str:
    """Canonical rendering: fixed section order, fixed key order, floats via
    repr (shortest round-tripping form).  Emitting and re-parsing yields the
    identical in-memory scenario; emitting twice yields identical bytes."""
    lines = [f"name: {sc.name}"]
    lines.append(f"tolerance: {_fmt_float(sc.tolerance)}")
    if sc.output_dir is not None:
        lines.append(f"output_dir: {sc.output_dir}")
    lines.append("")
    lines.append("exosystem:")
    lines.append(f"  S: {_fmt_matrix(sc.exo.S)}")
    lines.append(f"  upsilon0: {_fmt_vector(sc.exo.upsilon0)}")
    lines.append("")
    lines.append("gains: " + ("auto" if sc.gains is None else "explicit"))
    lines.append("")
    lines.append("agents:")
    for idx, model in enumerate(sc.agents):
        lines.append(f"- role: {model.role}")
        for key in _AGENT_MATRICES:
            lines.append(f"  {key}: {_fmt_matrix(getattr(model, key))}")
        lines.append(f"  x0: {_fmt_vector(sc.x0[idx])}")
        if sc.xhat0 is not None:
            lines.append(f"  xhat0: {_fmt_vector(sc.xhat0[idx])}")
        if sc.upsilon_hat0 is not None:
            lines.append(f"  upsilonhat0: "
                         f"{_fmt_vector(sc.upsilon_hat0[idx])}")
        if sc.gains is not None:
            g = sc.gains[idx]
            lines.append("  gains:")
            lines.append(f"    K: {_fmt_matrix(g.K)}")
            lines.append(f"    L1: {_fmt_matrix(g.L1)}")
            if g.L2 is not None:
                lines.append(f"    L2: {_fmt_matrix(g.L2)}")
    lines.append("")
    lines.append("graph:")
    lines.append(f"  adjacency: {_fmt_matrix(sc.adjacency)}")
    lines.append("")
    lines.append("channel:")
    lines.append(f"  ts: {_fmt_float(sc.channel.ts)}")
    lines.append(f"  p_transmit: {_fmt_float(sc.channel.p_transmit)}")
    lines.append(f"  p_loss: {_fmt_float(sc.channel.p_loss)}")
    lines.append(f"  delay_min: {_fmt_float(sc.channel.delay_min)}")
    lines.append(f"  delay_max: {_fmt_float(sc.channel.delay_max)}")
    lines.append(f"  h_star: {_fmt_float(sc.channel.h_star)}")
    lines.append(f"  seed: {sc.channel.seed}")
    lines.append("  enforce_blackout_bound: "
                 + ("true" if sc.channel.enforce_bound else "false"))
    lines.append("")
    lines.append("sim:")
    lines.append(f"  dt: {_fmt_float(sc.sim.dt)}")
    lines.append(f"  horizon: {_fmt_float(sc.sim.horizon)}")
    lines.append(f"  record_every: {sc.sim.record_every}")
    lines.append("")
    return "\n".join(lines)


def write_scenario(sc: Scenario, path):
    with open(path, "w") as fh:
        fh.write(scenario_to_yaml(sc))
