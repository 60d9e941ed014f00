"""Bundled ready-to-run scenarios.

``paper-example`` is the six-agent tracking benchmark (four followers, two
leaders, oscillator reference, blackout bound 1.5 s) that the acceptance
suite reproduces end to end.  The other presets are controlled failure
demonstrations: a broken leader path, an exosystem drifting off the
imaginary axis, and a channel losing 95% of its messages (which still
converges thanks to bound enforcement).
"""

import numpy as np

from .comms import ChannelParams
from .errors import UnknownPreset
from .plant import FOLLOWER, LEADER, AgentModel, ExoSystem, GainSet
from .scenario import Scenario, SimConfig

PRESET_NAMES = ("paper-example", "assumption4-violation",
                "unstable-exosystem", "lossy-extreme")

_BENCH_ADJACENCY = np.array([
    [0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
    [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
])

_DEFAULT_SEED = 7


def _bench_agent(a, b, c, role):
    """Benchmark agent family: position/velocity plant with parameter a in
    both velocity-row entries, disturbance coupling b, and (for leaders)
    reference feedthrough c in the measurement.  The regulated error is the
    position minus the first exogenous coordinate."""
    return AgentModel(
        A=[[0.0, 1.0], [a, a]],
        B=[[0.0], [1.0]],
        C=[[1.0, 0.0]],
        D=[[0.0]],
        E=[[0.0, 0.0], [0.0, b]],
        F=[[c, 0.0]],
        Ce=[[1.0, 0.0]],
        De=[[0.0]],
        Fe=[[-1.0, 0.0]],
        role=role,
    )


def _bench_agents():
    return [
        _bench_agent(-2.0, 0.0, 0.0, FOLLOWER),
        _bench_agent(-2.0, 0.0, 0.0, FOLLOWER),
        _bench_agent(0.0, 1.0, 0.0, FOLLOWER),
        _bench_agent(0.0, 1.0, 0.0, FOLLOWER),
        _bench_agent(0.0, 1.0, -1.0, LEADER),
        _bench_agent(0.0, 1.0, -1.0, LEADER),
    ]


def _bench_gains():
    follower = dict(K=[[-10.0, -8.0]], L1=[[-10.0], [-10.0]])
    leader = dict(K=[[-10.0, -8.0]], L1=[[-15.0], [-25.0]],
                  L2=[[-10.0], [-10.0]])
    return [GainSet(**follower) for _ in range(4)] + \
        [GainSet(**leader) for _ in range(2)]


def _bench_x0(seed):
    """Initial plant states drawn once per preset from the scenario seed
    (observers start at zero, so only x0 needs recording)."""
    out = []
    for idx in range(6):
        rng = np.random.default_rng([seed, 10 ** 6, idx])
        out.append(rng.uniform(-1.0, 1.0, size=2))
    return out


def _bench_channel(**overrides):
    base = dict(ts=0.1, p_transmit=0.5, p_loss=0.2, delay_min=0.05,
                delay_max=0.4, h_star=1.5, seed=_DEFAULT_SEED)
    base.update(overrides)
    return ChannelParams(**base)


def _benchmark_scenario(name, adjacency=None, exo=None, channel=None):
    return Scenario(
        name=name,
        agents=_bench_agents(),
        exo=exo or ExoSystem(S=[[0.0, 1.0], [-1.0, 0.0]],
                             upsilon0=[1.0, 0.0]),
        adjacency=_BENCH_ADJACENCY.copy() if adjacency is None else adjacency,
        gains=_bench_gains(),
        channel=channel or _bench_channel(),
        sim=SimConfig(dt=0.01, horizon=40.0, record_every=10),
        x0=_bench_x0(_DEFAULT_SEED),
    )


def build_preset(name: str) -> Scenario:
    """Construct one of the bundled presets by name."""
    if name == "paper-example":
        return _benchmark_scenario(name)
    if name == "assumption4-violation":
        # follower 1's only feed (from follower 0) is removed, so no leader
        # path reaches it and the reachability certificate must fail
        adj = _BENCH_ADJACENCY.copy()
        adj[1, 0] = 0.0
        return _benchmark_scenario(name, adjacency=adj)
    if name == "unstable-exosystem":
        exo = ExoSystem(S=[[0.1, 1.0], [-1.0, 0.1]], upsilon0=[1.0, 0.0])
        return _benchmark_scenario(name, exo=exo)
    if name == "lossy-extreme":
        channel = _bench_channel(p_transmit=0.9, p_loss=0.95)
        return _benchmark_scenario(name, channel=channel)
    raise UnknownPreset(f"unknown preset {name!r}; valid names: "
                        + ", ".join(PRESET_NAMES))
