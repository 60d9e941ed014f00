"""Per-edge discrete-time communication process.

Each directed edge (j, i) has its own slotted channel: sender j may transmit
at instants k * ts, each transmission is independently used or skipped,
delayed by a random amount, or lost outright (a loss is an infinite delay).
The receiver keeps only the largest sequence number delivered so far and
propagates its payload forward in time with the exosystem flow, which is the
prediction the follower coupling consumes.

Schedules are generated up front, deterministically from (seed, j, i), so a
whole run is reproducible bit for bit and any schedule can be exported,
inspected and replayed from CSV.

Enforcement of the blackout bound h* guarantees, by construction, that for
consecutive successful deliveries the receive time of the next one lags the
send time of the previous one by at most h* (and that the first delivery
lands within h* of time zero).  Message payloads are filled in at send time
by the simulation loop; generation only fixes timing.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import InfeasibleBound, NoDataYet, NoDelivery

LOST = math.inf

# fp slack for grid/bound comparisons (times are O(1..1e3) seconds)
_TIME_EPS = 1e-9


@dataclass
class ChannelParams:
    """Stochastic description of every edge channel plus the blackout bound.

    ``ts`` is the common sampling period; slot k means send time k * ts.
    ``p_transmit`` is the probability a slot is used at all, ``p_loss`` the
    probability a sent message never arrives, and delays are uniform on
    [delay_min, delay_max].  ``h_star`` is the blackout bound; when
    ``enforce_bound`` is set (the default) schedules are repaired so the
    bound holds by construction, otherwise the raw random schedule is kept,
    which lets users demonstrate what happens when the bound fails.
    """
    ts: float
    p_transmit: float
    p_loss: float
    delay_min: float
    delay_max: float
    h_star: float
    seed: int
    enforce_bound: bool = True

    def __post_init__(self):
        if self.ts <= 0:
            raise ValueError("ts must be positive")
        if not (0.0 <= self.p_transmit <= 1.0):
            raise ValueError("p_transmit must be in [0, 1]")
        if not (0.0 <= self.p_loss <= 1.0):
            raise ValueError("p_loss must be in [0, 1]")
        if not (0.0 <= self.delay_min <= self.delay_max):
            raise ValueError("need 0 <= delay_min <= delay_max")
        if not self.delay_max < self.h_star:
            raise ValueError("delay_max must be below h_star")
        if not self.h_star > self.ts:
            raise ValueError("h_star must exceed the sampling period")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.seed = int(self.seed)


@dataclass
class Message:
    """One (potential) transmission on an edge.

    ``delivery_time`` is ``LOST`` (infinity) for messages dropped by the
    channel.  ``payload`` is the sender's exogenous-signal estimate sampled
    at the send instant; it stays None until the simulation captures it.
    ``forced`` marks messages injected by blackout-bound enforcement.
    """
    edge: tuple
    k: int
    send_time: float
    delivery_time: float
    payload: np.ndarray = None
    forced: bool = False

    @property
    def lost(self):
        return math.isinf(self.delivery_time)


@dataclass
class EdgeState:
    """Receiver-side memory for one edge: the most recent delivery wins.

    ``kx`` is the largest delivered sequence number so far (None before the
    first delivery), ``stored_payload``/``stored_send_time`` belong to that
    message, and ``last_delivery_time`` is when it arrived.
    """
    kx: int = None
    stored_payload: np.ndarray = None
    stored_send_time: float = float("nan")
    last_delivery_time: float = float("nan")

    @property
    def has_data(self):
        return self.kx is not None


def _edge_rng(params: ChannelParams, edge):
    """Independent, deterministic stream per (seed, sender, receiver)."""
    j, i = edge
    return np.random.default_rng([params.seed, int(j), int(i)])


def generate_schedule(params: ChannelParams, horizon: float, edge) -> list:
    """Draw one edge's transmission schedule over [0, horizon].

    Every slot k with k * ts <= horizon is used with probability
    ``p_transmit``; a used slot is lost with probability ``p_loss`` and
    otherwise delayed uniformly in [delay_min, delay_max].  With
    ``enforce_bound`` set, extra slots are then forced (sent with the
    minimum delay) until consecutive successful deliveries respect the
    blackout bound across the whole horizon.  Identical parameters and seed
    reproduce the schedule exactly.
    """
    if params.h_star < params.ts + params.delay_min:
        raise InfeasibleBound(
            f"h*={params.h_star} cannot be met: the earliest possible "
            f"delivery after a slot is ts + delay_min = "
            f"{params.ts + params.delay_min}")
    rng = _edge_rng(params, edge)
    nslots = int(math.floor(horizon / params.ts + _TIME_EPS)) + 1
    used = rng.random(nslots) < params.p_transmit
    lost = rng.random(nslots) < params.p_loss
    delays = rng.uniform(params.delay_min, params.delay_max, size=nslots)

    msgs = {}
    for k in range(nslots):
        if not used[k]:
            continue
        send = k * params.ts
        delivery = LOST if lost[k] else float(send + delays[k])
        msgs[k] = Message(edge=tuple(edge), k=k, send_time=send,
                          delivery_time=delivery)
    if params.enforce_bound:
        _enforce_blackout_bound(msgs, params, horizon, edge)
    return [msgs[k] for k in sorted(msgs)]


def _latest_fitting_slot(anchor_send, params, nslots):
    """Largest slot whose minimum-delay delivery meets the bound from
    ``anchor_send``; the feasibility precondition makes it advance past the
    anchor."""
    limit = anchor_send + params.h_star - params.delay_min
    k = int(math.floor(limit / params.ts + _TIME_EPS))
    return min(k, nslots - 1)


def effective_deliveries(msgs, horizon=math.inf):
    """Deliveries that actually advance the receiver's sequence number.

    Successful messages within the horizon, scanned in delivery order,
    keeping only those whose k exceeds everything delivered before them.
    This is exactly the increasing subsequence the receiver's staleness is
    governed by, because stale out-of-order arrivals are discarded.
    """
    successes = sorted(
        (m for m in msgs if not m.lost
         and m.delivery_time <= horizon + _TIME_EPS),
        key=lambda m: (m.delivery_time, m.k))
    out = []
    best_k = -1
    for m in successes:
        if m.k > best_k:
            out.append(m)
            best_k = m.k
    return out


def _enforce_blackout_bound(msgs, params, horizon, edge):
    """Repair a schedule in place until the blackout bound holds.

    Scans effective deliveries in delivery order, maintaining the send time
    of the previous one as the anchor (time zero before the first).
    Whenever the next effective delivery would land after anchor + h*, the
    latest slot that can still meet the bound is forced with the minimum
    delay and the scan restarts.  Messages are also forced beyond the last
    delivery so coverage extends through the horizon.  Each forced slot
    advances the anchor by at least ts, so the loop terminates.
    """
    nslots = int(math.floor(horizon / params.ts + _TIME_EPS)) + 1

    def force(k):
        send = k * params.ts
        msgs[k] = Message(edge=tuple(edge), k=k, send_time=send,
                          delivery_time=send + params.delay_min, forced=True)

    for _ in range(4 * nslots + 8):
        effective = effective_deliveries(msgs.values(), horizon)
        anchor = 0.0
        violation = False
        for m in effective:
            if m.delivery_time > anchor + params.h_star + _TIME_EPS:
                force(_latest_fitting_slot(anchor, params, nslots))
                violation = True
                break
            anchor = m.send_time
        if violation:
            continue
        # Tail coverage: guarantee at least one delivery and keep the bound
        # usable through the end of the horizon.
        if not effective or anchor + params.h_star < horizon - _TIME_EPS:
            k = _latest_fitting_slot(anchor, params, nslots)
            if k * params.ts > anchor + _TIME_EPS:
                force(k)
                continue
        return
    raise AssertionError("blackout-bound enforcement failed to converge")


def deliver(state: EdgeState, msg: Message, now: float) -> EdgeState:
    """Apply one arrived message to the receiver state.

    Only a strictly newer sequence number replaces the stored data;
    out-of-order stragglers are discarded, which is what makes ``kx``
    monotone.  The state is mutated in place and returned.
    """
    if msg.lost:
        raise ValueError("lost messages are never delivered")
    if msg.delivery_time > now + _TIME_EPS:
        raise ValueError(f"message for t={msg.delivery_time} delivered "
                         f"early at t={now}")
    if state.kx is None or msg.k > state.kx:
        state.kx = msg.k
        state.stored_payload = msg.payload
        state.stored_send_time = msg.send_time
        state.last_delivery_time = now
    return state


def predict(S, state: EdgeState, t: float, expm_fn=None) -> np.ndarray:
    """Propagate the stored payload from its send instant to time t along
    the exosystem flow: exp(S * (t - send)) @ payload.

    This is exact for payloads sampled from a true exosystem trajectory.
    Raises :class:`NoDataYet` before the first delivery; callers are
    expected to skip the edge's coupling term entirely in that case.
    ``expm_fn`` lets the simulation substitute a memoized exponential.
    """
    if not state.has_data:
        raise NoDataYet("no message delivered on this edge yet")
    age = t - state.stored_send_time
    if age < -_TIME_EPS:
        raise ValueError(f"prediction time {t} precedes the stored send "
                         f"time {state.stored_send_time}")
    expm_fn = linalg.expm if expm_fn is None else expm_fn
    return expm_fn(S, age) @ state.stored_payload


def audit_blackouts(schedule, horizon: float) -> dict:
    """Max delivery gap per edge over a schedule (or several edges' worth).

    For each edge, the gap of an effective delivery (see
    :func:`effective_deliveries`) is its receive time minus the send time of
    the previous effective one, with time zero standing in before the first.
    The maximum gap bounds the staleness ``t - send(kx(t))`` the predictor
    ever sees on that edge.  Returns {edge: max gap}; raises
    :class:`NoDelivery` for an edge with no successful delivery within the
    horizon.
    """
    by_edge = {}
    for m in schedule:
        by_edge.setdefault(m.edge, []).append(m)
    gaps = {}
    for edge, msgs in by_edge.items():
        effective = effective_deliveries(msgs, horizon)
        if not effective:
            raise NoDelivery(f"edge {edge} has no successful delivery "
                             f"within {horizon} s")
        worst = 0.0
        prev_send = 0.0
        for m in effective:
            worst = max(worst, m.delivery_time - prev_send)
            prev_send = m.send_time
        gaps[edge] = worst
    return gaps


# ---------------------------------------------------------------------------
# CSV export / import (replay interface)

CSV_HEADER = ["edge_from", "edge_to", "k", "send_time", "delivery_time"]


def export_schedule_csv(schedules, path):
    """Write schedules (iterable of Message lists, or one flat list) to CSV.

    Lost messages carry the literal ``LOST`` in the delivery column.  Floats
    are printed with 17 significant digits so a round trip is lossless.
    """
    flat = []
    for item in schedules:
        if isinstance(item, Message):
            flat.append(item)
        else:
            flat.extend(item)
    flat.sort(key=lambda m: (m.edge, m.k))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for m in flat:
            delivery = "LOST" if m.lost else format(m.delivery_time, ".17g")
            writer.writerow([m.edge[0], m.edge[1], m.k,
                             format(m.send_time, ".17g"), delivery])


def import_schedule_csv(path) -> dict:
    """Read schedules back as {edge: [Message, ...]} sorted by slot."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected schedule header: {header}")
        for row in reader:
            j, i, k = int(row[0]), int(row[1]), int(row[2])
            send = float(row[3])
            delivery = LOST if row[4] == "LOST" else float(row[4])
            out.setdefault((j, i), []).append(
                Message(edge=(j, i), k=k, send_time=send,
                        delivery_time=delivery))
    for msgs in out.values():
        msgs.sort(key=lambda m: m.k)
    return out
