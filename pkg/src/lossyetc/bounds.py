"""Analytical bounds for event-triggered loops over a dropout-limited link.

Three families of certificates, all checkable against simulated traces:

* an amplification factor Delta such that the controller-side error stays
  under Delta * beta * exp(-alpha t) no matter how the channel drops packets
  within its consecutive-drop budget;
* a strictly positive lower bound on the spacing of trigger events, which
  rules out event accumulation; and
* for the hold-type estimator, the analogous amplification factor built from
  crossing times of a scalar transcendental equation.

The per-interval growth and decay constants these formulas consume are not
constructive in general; the report builders ground them on a worst-case
dropout trace of the scenario under study, which makes every reported number
reproducible from the scenario alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .numerics import (
    MARGINAL_RE_TOL,
    DecayEnvelope,
    NumericsError,
    bisect_root,
    decay_envelope,
    eigendecompose,
    exp_norms_on_grid,
    mat_exp,
)
from .system_model import Gain, NominalModel, Plant, closed_loop, gamma_matrix, gamma_zoh
from .trigger_channel import ChannelMode, ChannelPolicy, TriggerConfig
from .simulator import Scenario, Trace, simulate

SUBSPACE_RESIDUAL_TOL = 1e-9
_SUP_GRID_POINTS = 400
_ENVELOPE_FIT_POINTS = 400
_ENVELOPE_CHECK_POINTS = 300
_TRACE_MARGIN = 0.99


class BoundsError(ValueError):
    """Raised when a bound's precondition fails or a formula degenerates."""


@dataclass(frozen=True)
class GrowthEnvelope:
    """Certified lower envelope ||x(t)|| >= eta * exp(gamma * (t - t0))."""

    eta: float
    gamma: float

    def __post_init__(self):
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise BoundsError(f"eta must be positive and finite, got {self.eta!r}")
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise BoundsError(f"gamma must be positive and finite, got {self.gamma!r}")


class DeltaBreakdown(NamedTuple):
    """Amplification factor with the interval bounds that produced it."""

    Delta: float
    delta_bar: tuple[float, ...]
    delta_tilde: tuple[float, ...]


class MietBreakdown(NamedTuple):
    """Minimum inter-event time and the constants of its formula."""

    miet: float
    F_cap: float
    F_bar: float
    F_bold: float


class BoundCheck(NamedTuple):
    ok: bool
    max_ratio: float


@dataclass(frozen=True)
class BoundsReport:
    """Everything the model-based certificates produced for one scenario."""

    Delta: float
    delta_bar: tuple[float, ...]
    delta_tilde: tuple[float, ...]
    miet: float
    F_bar: float
    F_cap: float
    F_bold: float
    a_hat: float
    a_tilde: float
    envelopes: dict[str, DecayEnvelope]
    x0_norm: float

    def __post_init__(self):
        if not self.Delta >= 1.0:
            raise BoundsError(f"Delta must be >= 1, got {self.Delta!r}")
        if not self.miet > 0.0:
            raise BoundsError(f"miet must be positive, got {self.miet!r}")
        tilde = np.asarray(self.delta_tilde)
        if tilde.size and np.any(np.diff(tilde) >= 0.0):
            raise BoundsError("delta_tilde must be strictly decreasing")


@dataclass(frozen=True)
class ZohBoundsReport:
    """Amplification certificate for the hold-type estimator."""

    Delta_zoh: float
    delta_bar_zoh: tuple[float, ...]
    growth: GrowthEnvelope
    state_norms: tuple[float, ...]

    def __post_init__(self):
        m = len(self.delta_bar_zoh) + 1
        if not self.Delta_zoh >= m:
            raise BoundsError(
                f"Delta_zoh {self.Delta_zoh!r} below the exponent-free floor {m}"
            )
        if any(not d > 0.0 for d in self.delta_bar_zoh):
            raise BoundsError("every crossing time must be positive")


@dataclass(frozen=True)
class SubspaceReport:
    """Distance of the doubled initial condition from the non-growing span."""

    residual: float
    basis_dim: int


def growth_constants(Gamma: np.ndarray, x0: np.ndarray, horizon: float) -> GrowthEnvelope:
    """Exponential lower envelope of the plant-state norm under drop-out flow.

    The rate is 0.99 times the slowest growing mode of Gamma; the gain is
    fitted on the asymptotic half [horizon/2, horizon] of the matched flow
    started from the doubled initial condition, with a 5 percent safety
    margin, then re-checked on a fresh random grid.
    """
    g = np.asarray(Gamma, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] % 2:
        raise BoundsError(f"Gamma must be square with even dimension, got {g.shape}")
    n = g.shape[0] // 2
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise BoundsError(f"x0 has size {x0.size}, expected {n}")
    if not (horizon > 0.0 and math.isfinite(horizon)):
        raise BoundsError(f"horizon must be positive and finite, got {horizon!r}")

    eig = eigendecompose(g)
    growing = eig.eigenvalues.real > MARGINAL_RE_TOL
    if not np.any(growing):
        raise BoundsError("Gamma has no growing mode; no exponential lower envelope")
    gamma = 0.99 * float(np.min(eig.eigenvalues.real[growing]))

    w0 = np.concatenate([x0, x0])
    residual = _span_distance(eig.eigenvectors[:, ~growing], w0)
    if residual <= SUBSPACE_RESIDUAL_TOL:
        raise BoundsError(
            "initial condition excites no growing mode "
            f"(non-growing span distance {residual:.3e})"
        )

    t0 = horizon / 2.0
    ts = np.linspace(t0, horizon, _ENVELOPE_FIT_POINTS)
    vals = _flow_norms(g, w0, ts, n)
    eta = 0.95 * float(np.min(vals * np.exp(-gamma * ts)))
    if not eta > 0.0:
        raise BoundsError("flow norm vanished on the fit window")

    rng = np.random.default_rng(1)
    ts_check = np.sort(rng.uniform(t0, horizon, _ENVELOPE_CHECK_POINTS))
    vals_check = _flow_norms(g, w0, ts_check, n)
    short = eta * np.exp(gamma * ts_check) - vals_check
    worst = float(np.max(short))
    if worst > 1e-9 * max(1.0, float(np.max(vals_check))):
        raise BoundsError(
            f"envelope violated on the validation grid by {worst:.3e}"
        )
    return GrowthEnvelope(eta=eta, gamma=gamma)


def _flow_norms(g: np.ndarray, w0: np.ndarray, ts: np.ndarray, n: int) -> np.ndarray:
    """||first n components of exp(g t) w0|| for each t; ts must be sorted."""
    out = np.empty(ts.shape[0])
    z = w0
    prev = 0.0
    for i, t in enumerate(ts):
        dt = float(t) - prev
        if dt > 0.0:
            z = mat_exp(g, dt) @ z
            prev = float(t)
        out[i] = np.linalg.norm(z[:n])
    return out


def _span_distance(basis: np.ndarray, v: np.ndarray) -> float:
    if basis.shape[1] == 0:
        return float(np.linalg.norm(v))
    sol, *_ = np.linalg.lstsq(basis, v.astype(complex), rcond=None)
    return float(np.linalg.norm(v - basis @ sol))


def delta_bar(
    eta_j: float,
    zeta_j: float,
    gamma: float,
    kappa: float,
    cfg: TriggerConfig,
    t_j: float = 0.0,
) -> float:
    """Guaranteed length of one dropped-packet interval.

    ln((zeta_j + beta e^{-alpha t_j}) / eta_j) over (gamma + alpha) when
    kappa >= alpha, over (gamma + kappa) otherwise.
    """
    if not (eta_j > 0.0 and math.isfinite(eta_j)):
        raise BoundsError(f"eta_j must be positive and finite, got {eta_j!r}")
    if zeta_j < eta_j:
        raise BoundsError(f"zeta_j {zeta_j!r} must be at least eta_j {eta_j!r}")
    if not (gamma > 0.0 and kappa > 0.0):
        raise BoundsError(f"rates must be positive, got gamma={gamma!r} kappa={kappa!r}")
    if t_j < 0.0:
        raise BoundsError(f"t_j must be nonnegative, got {t_j!r}")
    numer = zeta_j + cfg.beta * math.exp(-cfg.alpha * t_j)
    denom = gamma + cfg.alpha if kappa >= cfg.alpha else gamma + kappa
    return math.log(numer / eta_j) / denom


def _transition_sup(S: np.ndarray, horizon: float) -> float:
    """sup over [0, horizon] of ||exp(S s)||, sampled on a dense grid.

    Falls back to the decay-envelope ceiling when the grid evaluation fails.
    """
    if horizon <= 0.0:
        return 1.0
    try:
        grid = np.linspace(0.0, horizon, _SUP_GRID_POINTS)
        return max(1.0, float(np.max(exp_norms_on_grid(S, grid))))
    except NumericsError:
        return max(1.0, decay_envelope(S).c)


def compute_Delta(
    model: NominalModel,
    gain: Gain,
    cfg: TriggerConfig,
    M: int,
    per_interval: list[tuple[float, float]],
    gamma: float,
    kappa: float,
) -> DeltaBreakdown:
    """Amplification factor for the controller-side error under M-1 drops.

    Delta = 1 + sum over k of e^{alpha tilde_k} * sup ||exp(S s)|| with the
    sup taken over s in [0, tilde_k]; tilde_k is the tail sum of the interval
    bounds, so the stale-data age after k drops never exceeds it.
    """
    if M <= 1:
        raise BoundsError(f"need M > 1, got {M!r}")
    if len(per_interval) != M - 1:
        raise BoundsError(
            f"need {M - 1} per-interval constants for M={M}, got {len(per_interval)}"
        )
    bars = tuple(
        delta_bar(eta_j, zeta_j, gamma, kappa, cfg) for eta_j, zeta_j in per_interval
    )
    tilde = tuple(float(sum(bars[k:])) for k in range(M - 1))
    s_mat = closed_loop(model, gain)
    total = 1.0
    for tk in tilde:
        total += math.exp(cfg.alpha * tk) * _transition_sup(s_mat, tk)
    return DeltaBreakdown(Delta=total, delta_bar=bars, delta_tilde=tilde)


def verify_ec_bound(tr: Trace, Delta: float, cfg: TriggerConfig) -> BoundCheck:
    """Check every sample against Delta * beta * exp(-alpha t) + 1e-9."""
    bound = Delta * cfg.beta * np.exp(-cfg.alpha * tr.t)
    ok = bool(np.all(tr.e_c_norm <= bound + 1e-9))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(bound > 0.0, tr.e_c_norm / bound, 0.0)
    return BoundCheck(ok=ok, max_ratio=float(np.max(ratios)))


def min_inter_event_time(
    plant: Plant,
    model: NominalModel,
    gain: Gain,
    cfg: TriggerConfig,
    M: int,
    Delta: float,
    x0_norm: float,
) -> MietBreakdown:
    """Strictly positive lower bound on the spacing of trigger events.

    Evaluated at the initial instant, where the driving terms are largest,
    so the bound is uniform in time; a negative F_bar is clamped to zero,
    which only shrinks the result.
    """
    if M <= 1:
        raise BoundsError(f"need M > 1, got {M!r}")
    if not (Delta >= 1.0 and math.isfinite(Delta)):
        raise BoundsError(f"Delta must be >= 1 and finite, got {Delta!r}")
    if not (x0_norm >= 0.0 and math.isfinite(x0_norm)):
        raise BoundsError(f"x0_norm must be nonnegative, got {x0_norm!r}")
    s_mat = closed_loop(model, gain)
    true_loop = plant.A + plant.B @ gain.K
    env_true = decay_envelope(true_loop)
    c, abar = env_true.c, env_true.rate
    if not cfg.alpha < abar:
        raise BoundsError(
            f"trigger decay rate {cfg.alpha!r} must stay below the closed-loop "
            f"rate {abar!r}"
        )
    a_hat = float(np.linalg.norm(s_mat, 2))
    mismatch = (plant.A - model.A_hat) + (plant.B - model.B_hat) @ gain.K
    a_tilde = float(np.linalg.norm(mismatch, 2))
    bk_norm = float(np.linalg.norm(plant.B @ gain.K, 2))
    drive = cfg.beta * Delta * bk_norm / (abar - cfg.alpha)
    f_bar = max(0.0, a_tilde * c * (x0_norm - drive))
    f_cap = (1.0 + a_tilde * c / (abar - cfg.alpha)) * cfg.beta * Delta * bk_norm
    f_bold = f_bar / (a_hat + abar) + f_cap / (a_hat + cfg.alpha)
    if not (f_bold > 0.0 and math.isfinite(f_bold)):
        raise BoundsError("driving terms vanished or overflowed; no usable bound")
    # log1p keeps the bound strictly positive even when beta/f_bold is far
    # below machine epsilon.
    miet = math.log1p(cfg.beta / f_bold) / (a_hat + abar)
    return MietBreakdown(miet=miet, F_cap=f_cap, F_bar=f_bar, F_bold=f_bold)


def compute_delta_zoh(
    plant: Plant,
    gain: Gain,
    cfg: TriggerConfig,
    M: int,
    state_norms: list[float],
    growth: GrowthEnvelope,
) -> ZohBoundsReport:
    """Amplification factor for the hold-type estimator.

    Each interval bound solves eta e^{gamma d} - X_j = beta e^{-alpha d} by
    bisection; the left side starts below the right and grows without bound,
    so [0, ln((X_j + beta)/eta)/gamma + 1] always brackets the crossing.
    """
    if M < 1:
        raise BoundsError(f"need M >= 1, got {M!r}")
    norms = [float(v) for v in state_norms]
    if len(norms) != M - 1:
        raise BoundsError(f"need {M - 1} state norms for M={M}, got {len(norms)}")
    eta, gamma = growth.eta, growth.gamma
    for j, x_norm in enumerate(norms):
        if eta > x_norm:
            raise BoundsError(
                f"envelope gain {eta!r} exceeds state norm {x_norm!r} at interval {j}"
            )
    bars = []
    for x_norm in norms:
        t_cap = math.log((x_norm + cfg.beta) / eta) / gamma + 1.0

        def crossing(d: float, x_norm=x_norm) -> float:
            return eta * math.exp(gamma * d) - x_norm - cfg.beta * math.exp(-cfg.alpha * d)

        if not crossing(t_cap) > 0.0:
            raise BoundsError(f"crossing bracket failed at cap {t_cap!r}")
        bars.append(bisect_root(crossing, 0.0, t_cap, tol=1e-12))
    bars = tuple(bars)
    # Tail sums for k = 1..M; the last is empty, so its term contributes 1.
    tilde = [float(sum(bars[k:])) for k in range(M - 1)] + [0.0]
    delta_zoh = float(sum(math.exp(cfg.alpha * tk) for tk in tilde))
    return ZohBoundsReport(
        Delta_zoh=delta_zoh,
        delta_bar_zoh=bars,
        growth=growth,
        state_norms=tuple(norms),
    )


def stable_subspace_residual(
    plant: Plant, model: NominalModel, gain: Gain, x0: np.ndarray
) -> SubspaceReport:
    """Distance of the doubled initial condition from the non-growing span.

    The span is assembled from the plant's non-growing eigenvectors padded
    with zeros and, for each closed-loop model eigenvalue, the resolvent
    image of the coupling applied to its eigenvector stacked over the
    eigenvector itself.  A residual above tolerance certifies that the
    matched flow excites a growing mode.
    """
    n = plant.n
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != n:
        raise BoundsError(f"x0 has size {x0.size}, expected {n}")
    eig_a = eigendecompose(plant.A)
    n_u = eig_a.num_growing
    if n_u < 1:
        raise BoundsError("plant has no growing mode; the membership test is vacuous")
    keep = eig_a.eigenvalues.real <= MARGINAL_RE_TOL
    plant_cols = np.vstack(
        [eig_a.eigenvectors[:, keep], np.zeros((n, int(np.sum(keep))))]
    )
    s_mat = closed_loop(model, gain)
    eig_s = eigendecompose(s_mat)
    bk = plant.B @ gain.K
    scale = max(1.0, float(np.linalg.norm(plant.A, 2)))
    cols = []
    for lam, chi in zip(eig_s.eigenvalues, eig_s.eigenvectors.T):
        gap = float(np.min(np.abs(eig_a.eigenvalues - lam)))
        if gap <= 1e-9 * scale:
            raise BoundsError(
                f"model eigenvalue {lam!r} collides with the plant spectrum; "
                "resolvent is singular"
            )
        mu = np.linalg.solve(lam * np.eye(n) - plant.A.astype(complex), bk @ chi)
        cols.append(np.concatenate([mu, chi]))
    basis = np.hstack([plant_cols.astype(complex), np.column_stack(cols)])
    v = np.concatenate([x0, x0])
    residual = _span_distance(basis, v)
    return SubspaceReport(residual=residual, basis_dim=2 * n - n_u)


def stability_envelope_bound(scn: Scenario, report: BoundsReport) -> float:
    """Constant bounding ||x(t)|| * exp(alpha t) over the whole run."""
    env = report.envelopes["true_loop"]
    bk_norm = float(np.linalg.norm(scn.plant.B @ scn.gain.K, 2))
    gap = env.rate - scn.trigger.alpha
    if not gap > 0.0:
        raise BoundsError("trigger decay rate reaches the closed-loop rate")
    return env.c * report.x0_norm + scn.trigger.beta * env.c * report.Delta * bk_norm / gap


# --- trace-grounded report builders -------------------------------------------

def _worst_case_trace(scn: Scenario) -> Trace:
    policy = ChannelPolicy(mode=ChannelMode.WORST_CASE, M=scn.channel.M)
    return simulate(replace(scn, channel=policy))


def _complete_windows(tr: Trace, M: int) -> list[np.ndarray]:
    """Event times [s_0 .. s_M] of every maximal-drop stretch in the trace.

    s_0 is a delivery (or the synchronized start), s_1..s_{M-1} the dropped
    triggers, s_M the next delivery.
    """
    anchors = np.concatenate([[0.0], tr.deliveries])
    windows = []
    for a, b in zip(anchors[:-1], anchors[1:]):
        interior = tr.triggers[(tr.triggers > a) & (tr.triggers < b)]
        if interior.size == M - 1:
            windows.append(np.concatenate([[a], interior, [b]]))
    return windows


def _interval_constants(
    tr: Trace, events: np.ndarray, gamma: float, c_model: float
) -> list[tuple[float, float]]:
    """Trace-grounded (eta_j, zeta_j) for each dropped interval of a window."""
    out = []
    for j in range(1, events.size - 1):
        lo, hi = events[j], events[j + 1]
        i0 = int(np.searchsorted(tr.t, lo, side="left"))
        i1 = int(np.searchsorted(tr.t, hi, side="left"))
        norms = np.linalg.norm(tr.x[i0:i1], axis=1)
        if norms.size == 0 or not float(np.min(norms)) > 0.0:
            raise BoundsError(f"state norm vanished on interval [{lo}, {hi})")
        ts = tr.t[i0:i1]
        eta_j = _TRACE_MARGIN * float(np.min(norms * np.exp(-gamma * (ts - lo))))
        zeta_j = c_model * float(norms[0])
        out.append((eta_j, zeta_j))
    return out


def _whole_trace_constants(
    tr: Trace, gamma: float, c_model: float, m: int
) -> list[tuple[float, float]]:
    """Fallback when no maximal-drop window exists: one global envelope."""
    norms = np.linalg.norm(tr.x, axis=1)
    if not float(np.min(norms)) > 0.0:
        raise BoundsError("state norm vanished along the trace")
    eta = _TRACE_MARGIN * float(np.min(norms * np.exp(-gamma * tr.t)))
    zeta = c_model * float(np.max(norms))
    return [(eta, zeta)] * (m - 1)


def _growth_rate(gamma_mat: np.ndarray) -> float:
    eig = eigendecompose(gamma_mat)
    growing = eig.eigenvalues.real > MARGINAL_RE_TOL
    if not np.any(growing):
        raise BoundsError("augmented flow has no growing mode")
    return 0.99 * float(np.min(eig.eigenvalues.real[growing]))


def analyze_scenario(scn: Scenario, tr: Trace | None = None) -> BoundsReport:
    """Full model-based certificate for one scenario.

    Grounds the per-interval constants on a worst-case dropout trace (the
    given one, or a fresh run), takes the worst window's amplification, and
    assembles the inter-event and stability constants from the scenario
    matrices.
    """
    if tr is None:
        tr = _worst_case_trace(scn)
    m = scn.channel.M
    s_mat = closed_loop(scn.model, scn.gain)
    env_model = decay_envelope(s_mat)
    true_loop = scn.plant.A + scn.plant.B @ scn.gain.K
    env_true = decay_envelope(true_loop)
    if not scn.trigger.alpha < env_true.rate:
        raise BoundsError(
            f"trigger decay rate {scn.trigger.alpha!r} must stay below the "
            f"closed-loop rate {env_true.rate!r}"
        )
    gamma = _growth_rate(gamma_matrix(scn.plant, scn.model, scn.gain))
    kappa = env_model.rate

    windows = _complete_windows(tr, m)
    best: DeltaBreakdown | None = None
    for events in windows:
        consts = _interval_constants(tr, events, gamma, env_model.c)
        frag = compute_Delta(scn.model, scn.gain, scn.trigger, m, consts, gamma, kappa)
        if best is None or frag.Delta > best.Delta:
            best = frag
    if best is None:
        consts = _whole_trace_constants(tr, gamma, env_model.c, m)
        best = compute_Delta(scn.model, scn.gain, scn.trigger, m, consts, gamma, kappa)

    x0_norm = float(np.linalg.norm(scn.x0))
    miet = min_inter_event_time(
        scn.plant, scn.model, scn.gain, scn.trigger, m, best.Delta, x0_norm
    )
    mismatch = (scn.plant.A - scn.model.A_hat) + (
        scn.plant.B - scn.model.B_hat
    ) @ scn.gain.K
    return BoundsReport(
        Delta=best.Delta,
        delta_bar=best.delta_bar,
        delta_tilde=best.delta_tilde,
        miet=miet.miet,
        F_bar=miet.F_bar,
        F_cap=miet.F_cap,
        F_bold=miet.F_bold,
        a_hat=float(np.linalg.norm(s_mat, 2)),
        a_tilde=float(np.linalg.norm(mismatch, 2)),
        envelopes={"true_loop": env_true, "model_loop": env_model},
        x0_norm=x0_norm,
    )


def analyze_scenario_zoh(scn: Scenario, tr: Trace | None = None) -> ZohBoundsReport:
    """Hold-type certificate for one scenario, grounded like analyze_scenario."""
    if tr is None:
        tr = _worst_case_trace(scn)
    m = scn.channel.M
    gamma = _growth_rate(gamma_zoh(scn.plant, scn.gain))

    best: ZohBoundsReport | None = None
    for events in _complete_windows(tr, m):
        i_rows = [int(np.searchsorted(tr.t, events[j], side="left")) for j in range(1, m)]
        norms = [float(np.linalg.norm(tr.x[i])) for i in i_rows]
        etas = [eta for eta, _ in _interval_constants(tr, events, gamma, 1.0)]
        eta = min(min(etas), min(norms))
        growth = GrowthEnvelope(eta=eta, gamma=gamma)
        rep = compute_delta_zoh(scn.plant, scn.gain, scn.trigger, m, norms, growth)
        if best is None or rep.Delta_zoh > best.Delta_zoh:
            best = rep
    if best is None:
        all_norms = np.linalg.norm(tr.x, axis=1)
        if not float(np.min(all_norms)) > 0.0:
            raise BoundsError("state norm vanished along the trace")
        eta = _TRACE_MARGIN * float(np.min(all_norms * np.exp(-gamma * tr.t)))
        norms = [float(np.max(all_norms))] * (m - 1)
        growth = GrowthEnvelope(eta=eta, gamma=gamma)
        best = compute_delta_zoh(scn.plant, scn.gain, scn.trigger, m, norms, growth)
    return best
