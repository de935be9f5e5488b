"""Hybrid closed-loop simulator with exact inter-event flow.

The integrator stacks the plant state x, the estimator discrepancy
w = x_s - x_c, and the controller copy x_c.  Tracking the discrepancy rather
than the sensor copy itself makes synchronization structurally exact: after a
delivery w is the zero vector and stays bit-for-bit zero until the next
trigger, so the two estimator copies compare equal on every synchronized
stretch.  Between events the stack evolves linearly; sample-to-sample
propagation is a cached matrix-vector product and threshold crossings are
localized by dyadic bisection on the same exact flow, so no integration error
enters the bound checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import mat_exp
from .system_model import (
    EstimatorKind,
    Gain,
    NominalModel,
    Plant,
    closed_loop,
    gamma_matrix,
    gamma_zoh,
)
from .trigger_channel import (
    ChannelPolicy,
    Outcome,
    TriggerConfig,
    channel_offer,
    initial_channel_state,
    threshold_value,
)

# Abort threshold for event accumulation; a gap this small signals a
# numerically degenerate scenario rather than genuine dynamics.
ZENO_GAP = 1e-12

_BATCH = 256
_MAX_BISECT_LEVELS = 64


class SimulationError(RuntimeError):
    """Simulation cannot proceed (event accumulation or numerics failure)."""


@dataclass(frozen=True)
class Scenario:
    """Complete, immutable description of one closed-loop experiment.

    Validation happens at construction: dimensional consistency plus the
    sampling parameters ordered so the event bracketing resolution
    assumptions hold (sample_dt at most t_max/10, event_tol at most
    sample_dt/100).  Stability is deliberately not required here; the bounds
    layer imposes its own hypotheses where the certificates need them.
    """

    plant: Plant
    model: NominalModel
    gain: Gain
    estimator: EstimatorKind
    trigger: TriggerConfig
    channel: ChannelPolicy
    x0: np.ndarray
    t_max: float
    sample_dt: float = 1e-3
    event_tol: float = 1e-9

    def __post_init__(self):
        n, m = self.plant.n, self.plant.m
        if self.model.n != n:
            raise ValueError(
                f"model dimension {self.model.n} does not match plant dimension {n}"
            )
        if self.model.B_hat.shape != self.plant.B.shape:
            raise ValueError(
                f"model input shape {self.model.B_hat.shape} does not match "
                f"plant input shape {self.plant.B.shape}"
            )
        if self.gain.K.shape != (m, n):
            raise ValueError(
                f"gain shape {self.gain.K.shape} incompatible with ({m}, {n})"
            )
        if not isinstance(self.estimator, EstimatorKind):
            raise ValueError(f"estimator must be an EstimatorKind, got {self.estimator!r}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != n:
            raise ValueError(f"x0 has size {x0.size}, expected {n}")
        if not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be finite")
        x0 = x0.copy()
        x0.flags.writeable = False
        object.__setattr__(self, "x0", x0)
        if not (math.isfinite(self.t_max) and self.t_max > 0.0):
            raise ValueError(f"t_max must be positive and finite, got {self.t_max!r}")
        if not (0.0 < self.sample_dt <= self.t_max / 10.0):
            raise ValueError(
                f"sample_dt must lie in (0, t_max/10], got {self.sample_dt!r}"
            )
        if not (0.0 < self.event_tol <= self.sample_dt / 100.0):
            raise ValueError(
                f"event_tol must lie in (0, sample_dt/100], got {self.event_tol!r}"
            )

    @property
    def n(self) -> int:
        return self.plant.n


@dataclass(frozen=True)
class Trace:
    """Dense record of one run: per-sample columns plus the event instants.

    Event instants appear twice in the sample rows: once just before the jump
    (flagged in `triggered` / `delivered`) and once just after, at the next
    representable time, so both one-sided values of every signal are recorded.
    """

    t: np.ndarray
    x: np.ndarray
    x_s: np.ndarray
    x_c: np.ndarray
    e_s_norm: np.ndarray
    e_c_norm: np.ndarray
    threshold: np.ndarray
    triggered: np.ndarray
    delivered: np.ndarray
    triggers: np.ndarray
    deliveries: np.ndarray

    @property
    def num_samples(self) -> int:
        return self.t.shape[0]

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass(frozen=True)
class SummaryStats:
    """Interval statistics and envelope figures computed from one trace."""

    trigger_count: int
    delivery_count: int
    min_inter_event: float | None
    mean_inter_event: float | None
    min_receive_interval: float | None
    mean_receive_interval: float | None
    final_state_norm: float
    empirical_amplification: float


@dataclass
class _Buffers:
    """Growable column store for trace rows."""

    n: int
    cap: int
    size: int = 0
    t: np.ndarray = field(init=False)
    x: np.ndarray = field(init=False)
    x_s: np.ndarray = field(init=False)
    x_c: np.ndarray = field(init=False)
    es: np.ndarray = field(init=False)
    ec: np.ndarray = field(init=False)
    thr: np.ndarray = field(init=False)
    trig: np.ndarray = field(init=False)
    deliv: np.ndarray = field(init=False)

    def __post_init__(self):
        self.t = np.empty(self.cap)
        self.x = np.empty((self.cap, self.n))
        self.x_s = np.empty((self.cap, self.n))
        self.x_c = np.empty((self.cap, self.n))
        self.es = np.empty(self.cap)
        self.ec = np.empty(self.cap)
        self.thr = np.empty(self.cap)
        self.trig = np.zeros(self.cap, dtype=bool)
        self.deliv = np.zeros(self.cap, dtype=bool)

    def _ensure(self, extra: int):
        need = self.size + extra
        if need <= self.cap:
            return
        new_cap = max(need, 2 * self.cap)
        for name in ("t", "es", "ec", "thr"):
            arr = getattr(self, name)
            grown = np.empty(new_cap)
            grown[: self.size] = arr[: self.size]
            setattr(self, name, grown)
        for name in ("x", "x_s", "x_c"):
            arr = getattr(self, name)
            grown = np.empty((new_cap, self.n))
            grown[: self.size] = arr[: self.size]
            setattr(self, name, grown)
        for name in ("trig", "deliv"):
            arr = getattr(self, name)
            grown = np.zeros(new_cap, dtype=bool)
            grown[: self.size] = arr[: self.size]
            setattr(self, name, grown)
        self.cap = new_cap

    def append_block(self, t, x, x_s, x_c, es, ec, thr):
        k = t.shape[0]
        if k == 0:
            return
        self._ensure(k)
        i, j = self.size, self.size + k
        self.t[i:j] = t
        self.x[i:j] = x
        self.x_s[i:j] = x_s
        self.x_c[i:j] = x_c
        self.es[i:j] = es
        self.ec[i:j] = ec
        self.thr[i:j] = thr
        self.size = j

    def append_row(self, t, x, x_s, x_c, es, ec, thr, trig=False, deliv=False):
        self._ensure(1)
        i = self.size
        self.t[i] = t
        self.x[i] = x
        self.x_s[i] = x_s
        self.x_c[i] = x_c
        self.es[i] = es
        self.ec[i] = ec
        self.thr[i] = thr
        self.trig[i] = trig
        self.deliv[i] = deliv
        self.size = i + 1


def _stacked_generator(scn: Scenario) -> np.ndarray:
    """Generator of the stacked [x, w, x_c] flow between events."""
    n = scn.n
    bk = scn.plant.B @ scn.gain.K
    g = np.zeros((3 * n, 3 * n))
    g[:n, :n] = scn.plant.A
    g[:n, 2 * n :] = bk
    if scn.estimator is EstimatorKind.MODEL_BASED:
        # Both estimator copies run the nominal closed loop, so their
        # difference w does too.
        s = closed_loop(scn.model, scn.gain)
        g[n : 2 * n, n : 2 * n] = s
        g[2 * n :, 2 * n :] = s
    return g


def _step_propagator(scn: Scenario, dt: float) -> np.ndarray:
    """exp(dt * stacked generator), assembled block-wise.

    The held blocks of the hold estimator are exact identities and the
    discrepancy block never couples to the rest, so a drift-free stretch
    stays drift-free to the last bit.
    """
    n = scn.n
    p = np.zeros((3 * n, 3 * n))
    if scn.estimator is EstimatorKind.MODEL_BASED:
        q = mat_exp(gamma_matrix(scn.plant, scn.model, scn.gain), dt)
        p[:n, :n] = q[:n, :n]
        p[:n, 2 * n :] = q[:n, n:]
        # w and x_c share the nominal closed-loop block of the propagator.
        p[2 * n :, 2 * n :] = q[n:, n:]
        p[n : 2 * n, n : 2 * n] = q[n:, n:]
    else:
        q = mat_exp(gamma_zoh(scn.plant, scn.gain), dt)
        p[:n, :n] = q[:n, :n]
        p[:n, 2 * n :] = q[:n, n:]
        p[n : 2 * n, n : 2 * n] = np.eye(n)
        p[2 * n :, 2 * n :] = np.eye(n)
    return p


def _halvings(scn: Scenario, width: float, levels: int) -> list[np.ndarray]:
    """Propagators over width/2, width/4, ... width/2^levels."""
    return [_step_propagator(scn, width * 0.5 ** (i + 1)) for i in range(levels)]


def _errors(scn: Scenario, z: np.ndarray) -> tuple[float, float]:
    n = scn.n
    e_c = z[2 * n :] - z[:n]
    e_s = z[n : 2 * n] + e_c
    return float(np.linalg.norm(e_s)), float(np.linalg.norm(e_c))


def _bisect_step(
    scn: Scenario,
    t_lo: float,
    z_lo: np.ndarray,
    width: float,
    z_hi: np.ndarray,
    halvings: list[np.ndarray],
    tol: float,
) -> tuple[float, np.ndarray]:
    """Localize the crossing inside one flow step.

    Invariant: margin <= 0 at the moving lower end, > 0 at the upper end.
    Each level halves the bracket with a single matrix-vector product.
    Returns the upper end, where the threshold is strictly exceeded.
    """
    lo_off = 0.0
    hi_off = width
    t_hi = t_lo + width
    for h in halvings:
        if hi_off - lo_off <= tol:
            break
        mid_off = lo_off + (hi_off - lo_off) * 0.5
        z_mid = h @ z_lo
        t_mid = t_lo + mid_off
        es, _ = _errors(scn, z_mid)
        if es > threshold_value(t_mid, scn.trigger):
            hi_off = mid_off
            t_hi = t_mid
            z_hi = z_mid
        else:
            lo_off = mid_off
            z_lo = z_mid
    return t_hi, z_hi


def _levels_for(width: float, tol: float) -> int:
    if width <= tol:
        return 0
    return min(_MAX_BISECT_LEVELS, int(math.ceil(math.log2(width / tol))) + 1)


def simulate(scn: Scenario) -> Trace:
    """Run one closed-loop experiment and return its dense trace.

    Between events the stacked state advances by exact propagators in blocks
    of up to _BATCH grid steps; the first sample violating the threshold
    yields a one-step bracket that dyadic bisection narrows to event_tol.
    At each localized trigger the sensor copy resets, one packet is offered
    to the channel, and a delivery additionally resets the controller copy at
    the same instant.  Sample rows are recorded on the sample_dt grid plus
    one row on each side of every event.  Deterministic for a fixed scenario,
    seed included.
    """
    n = scn.n
    dt = scn.sample_dt
    n_full = int(math.floor(scn.t_max / dt + 1e-9))
    grid = np.arange(n_full + 1, dtype=float) * dt
    if grid[-1] < scn.t_max - 1e-9 * max(1.0, scn.t_max):
        grid = np.append(grid, scn.t_max)

    p_step = _step_propagator(scn, dt)
    grid_levels = _levels_for(dt, scn.event_tol)
    grid_halvings = _halvings(scn, dt, grid_levels)

    # Cumulative powers: powers[k] advances the stack k+1 grid steps.
    powers = np.empty((_BATCH, 3 * n, 3 * n))
    powers[0] = p_step
    for k in range(1, _BATCH):
        powers[k] = p_step @ powers[k - 1]

    z = np.concatenate([scn.x0, np.zeros(n), scn.x0])
    ch_state = initial_channel_state(scn.channel)
    buffers = _Buffers(n=n, cap=grid.shape[0] + 256)
    triggers: list[float] = []
    deliveries: list[float] = []

    def record_event_rows(t_star: float, z_pre: np.ndarray):
        nonlocal z, ch_state
        if triggers and t_star - triggers[-1] < ZENO_GAP:
            raise SimulationError(
                f"inter-event gap {t_star - triggers[-1]:.3e} below {ZENO_GAP:.0e} "
                f"at t={t_star:.6f}: event accumulation, aborting"
            )
        es_pre, ec_pre = _errors(scn, z_pre)
        x_pre = z_pre[:n]
        xc_pre = z_pre[2 * n :]
        xs_pre = z_pre[n : 2 * n] + xc_pre
        thr = float(threshold_value(t_star, scn.trigger))
        outcome, ch_state = channel_offer(scn.channel, ch_state)
        got = outcome is Outcome.DELIVERED
        buffers.append_row(
            t_star, x_pre, xs_pre, xc_pre, es_pre, ec_pre, thr, trig=True, deliv=got
        )
        triggers.append(t_star)
        # Jumps: the sensor copy resets at every trigger; the controller copy
        # resets only on delivery.  In discrepancy coordinates:
        #   trigger:  w := x - x_c, delivery on top of it: x_c := x, w := 0.
        z_post = z_pre.copy()
        if got:
            z_post[n : 2 * n] = 0.0
            z_post[2 * n :] = z_pre[:n]
            deliveries.append(t_star)
        else:
            z_post[n : 2 * n] = z_pre[:n] - z_pre[2 * n :]
        t_plus = float(np.nextafter(t_star, np.inf))
        x_post = z_post[:n]
        xc_post = z_post[2 * n :]
        # Post-jump sensor copy equals the plant state by definition of the
        # reset; record that value, not a reconstruction.
        xs_post = x_post.copy()
        ec_post = 0.0 if got else ec_pre
        buffers.append_row(
            t_plus,
            x_post,
            xs_post,
            xc_post,
            0.0,
            ec_post,
            float(threshold_value(t_plus, scn.trigger)),
        )
        z = z_post

    # Row 0 at t = 0.
    es0, ec0 = _errors(scn, z)
    buffers.append_row(
        0.0, z[:n], z[n : 2 * n] + z[2 * n :], z[2 * n :], es0, ec0,
        float(threshold_value(0.0, scn.trigger)),
    )

    next_idx = 1  # index into grid of the next row to produce
    t_cursor = 0.0
    last = grid.shape[0] - 1
    uniform_until = n_full  # grid[i+1]-grid[i] == dt exactly for i < n_full

    while next_idx <= last:
        on_grid = t_cursor == grid[next_idx - 1]
        if on_grid and next_idx <= uniform_until:
            batch = min(_BATCH, uniform_until - next_idx + 1)
            zb = np.einsum("kij,j->ki", powers[:batch], z)
            tb = grid[next_idx : next_idx + batch]
            xb = zb[:, :n]
            xcb = zb[:, 2 * n :]
            xsb = zb[:, n : 2 * n] + xcb
            esb = np.linalg.norm(xsb - xb, axis=1)
            ecb = np.linalg.norm(xcb - xb, axis=1)
            thrb = threshold_value(tb, scn.trigger)
            bad = np.flatnonzero(esb > thrb)
            if bad.size == 0:
                buffers.append_block(tb, xb, xsb, xcb, esb, ecb, thrb)
                z = zb[batch - 1]
                t_cursor = tb[batch - 1]
                next_idx += batch
                continue
            j = int(bad[0])
            if j > 0:
                buffers.append_block(
                    tb[:j], xb[:j], xsb[:j], xcb[:j], esb[:j], ecb[:j], thrb[:j]
                )
            t_lo = t_cursor if j == 0 else tb[j - 1]
            z_lo = z if j == 0 else zb[j - 1]
            t_star, z_pre = _bisect_step(
                scn, t_lo, z_lo, dt, zb[j], grid_halvings, scn.event_tol
            )
            record_event_rows(t_star, z_pre)
            t_cursor = t_star
            next_idx += j
            if t_star == grid[next_idx]:
                # Bisection landed exactly on the grid point; its pre/post
                # rows already cover that sample.
                next_idx += 1
            continue
        # Off the uniform grid: partial step to the next grid time.
        target = grid[next_idx]
        width = target - t_cursor
        if width <= 0.0:
            next_idx += 1
            continue
        prop = _step_propagator(scn, width)
        z_next = prop @ z
        es_t, ec_t = _errors(scn, z_next)
        thr_t = float(threshold_value(target, scn.trigger))
        if es_t > thr_t:
            levels = _levels_for(width, scn.event_tol)
            t_star, z_pre = _bisect_step(
                scn, t_cursor, z, width, z_next, _halvings(scn, width, levels),
                scn.event_tol,
            )
            record_event_rows(t_star, z_pre)
            t_cursor = t_star
            if t_star == target:
                next_idx += 1
            continue
        x_t = z_next[:n]
        xc_t = z_next[2 * n :]
        xs_t = z_next[n : 2 * n] + xc_t
        buffers.append_row(target, x_t, xs_t, xc_t, es_t, ec_t, thr_t)
        z = z_next
        t_cursor = target
        next_idx += 1

    m = buffers.size
    frozen = {}
    for name, col in (
        ("t", buffers.t), ("e_s_norm", buffers.es), ("e_c_norm", buffers.ec),
        ("threshold", buffers.thr), ("triggered", buffers.trig),
        ("delivered", buffers.deliv), ("x", buffers.x), ("x_s", buffers.x_s),
        ("x_c", buffers.x_c),
    ):
        arr = col[:m].copy()
        arr.flags.writeable = False
        frozen[name] = arr
    trig_arr = np.asarray(triggers, dtype=float)
    deliv_arr = np.asarray(deliveries, dtype=float)
    trig_arr.flags.writeable = False
    deliv_arr.flags.writeable = False
    return Trace(triggers=trig_arr, deliveries=deliv_arr, **frozen)


@dataclass(frozen=True)
class FlowProbe:
    """Exact-flow evaluator anchored at a known stacked state.

    Exposes the trigger margin g(t) = ||e_s(t)|| - threshold(t) along the
    flow started from (t_ref, z_ref), for event localization and tests.
    """

    scenario: Scenario
    t_ref: float
    z_ref: np.ndarray

    def state(self, t: float) -> np.ndarray:
        if t < self.t_ref:
            raise ValueError(f"t={t!r} precedes the anchor {self.t_ref!r}")
        if t == self.t_ref:
            return np.asarray(self.z_ref, dtype=float).copy()
        prop = _step_propagator(self.scenario, t - self.t_ref)
        return prop @ np.asarray(self.z_ref, dtype=float)

    def margin(self, t: float) -> float:
        es, _ = _errors(self.scenario, self.state(t))
        return es - float(threshold_value(t, self.scenario.trigger))


def probe_from_scenario(scn: Scenario) -> FlowProbe:
    """Probe anchored at the scenario's initial condition."""
    n = scn.n
    z0 = np.concatenate([scn.x0, np.zeros(n), scn.x0])
    return FlowProbe(scenario=scn, t_ref=0.0, z_ref=z0)


def locate_event(flow: FlowProbe, t_lo: float, t_hi: float, tol: float) -> float:
    """First threshold crossing in (t_lo, t_hi], to within tol.

    Bisection on the margin over the exact flow; requires margin(t_lo) <= 0 <
    margin(t_hi).  Returns the upper end of the final bracket, so the
    threshold is strictly exceeded at the returned instant.
    """
    if not (t_hi > t_lo):
        raise ValueError(f"need t_hi > t_lo, got [{t_lo!r}, {t_hi!r}]")
    if not (tol > 0.0):
        raise ValueError(f"tol must be positive, got {tol!r}")
    if flow.margin(t_lo) > 0.0:
        raise ValueError(f"margin already positive at t_lo={t_lo!r}")
    if flow.margin(t_hi) <= 0.0:
        raise ValueError(f"margin not positive at t_hi={t_hi!r}: no bracket")
    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = lo + (hi - lo) * 0.5
        if mid <= lo or mid >= hi:
            break
        if flow.margin(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def summarize(tr: Trace, cfg: TriggerConfig) -> SummaryStats:
    """Interval statistics and the empirical amplification of one trace."""
    if tr.num_samples == 0:
        raise ValueError("empty trace")
    trig = tr.triggers
    deliv = tr.deliveries
    inter = np.diff(trig) if trig.size >= 2 else None
    recv = np.diff(deliv) if deliv.size >= 2 else None
    amp = float(np.max(tr.e_c_norm * np.exp(cfg.alpha * tr.t) / cfg.beta))
    return SummaryStats(
        trigger_count=int(trig.size),
        delivery_count=int(deliv.size),
        min_inter_event=float(np.min(inter)) if inter is not None else None,
        mean_inter_event=float(np.mean(inter)) if inter is not None else None,
        min_receive_interval=float(np.min(recv)) if recv is not None else None,
        mean_receive_interval=float(np.mean(recv)) if recv is not None else None,
        final_state_norm=float(np.linalg.norm(tr.x[-1])),
        empirical_amplification=amp,
    )
