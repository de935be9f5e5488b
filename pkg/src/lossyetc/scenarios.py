"""Scenario files, the lane-following vehicle preset, and serialization.

Scenarios travel as JSON documents with one top-level section per subsystem;
traces travel as CSV with 17-significant-digit numbers so a written trace
parses back bit-for-bit.  Loading collects every schema and invariant
violation it can find, naming the offending key and, where possible, the
line it appears on.
"""

from __future__ import annotations

import csv
import json
import math
from typing import Any

import numpy as np

from .bounds import BoundsReport, SubspaceReport, ZohBoundsReport
from .simulator import Scenario, SummaryStats, Trace
from .system_model import EstimatorKind, Gain, NominalModel, Plant
from .trigger_channel import ChannelMode, ChannelPolicy, TriggerConfig


class ScenarioFormatError(ValueError):
    """Carries the full list of problems found in a scenario document."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# Nominal lateral/yaw parameters of the lane-following vehicle scenario.
_NOM_A = ((-1.6579, 10.45), (0.4886, -2.718))
_NOM_B = (-12.1053, 13.1429)
_LOOKAHEAD = 40.0
_CROSS_COUPLING = -12.0
_A_JITTER = 0.1
_B_JITTER = 0.05


def _vehicle_matrices(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    full_a = np.array(
        [
            [a[0, 0], a[0, 1], 0.0, 0.0],
            [a[1, 0], a[1, 1], 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, _CROSS_COUPLING, 0.0],
        ]
    )
    full_b = np.array([[b[0], 0.0], [0.0, b[1]], [0.0, 0.0], [0.0, 0.0]])
    return full_a, full_b


def vehicle_preset(perturbation_seed: int | None = None) -> Scenario:
    """Lane-following vehicle scenario.

    The model matrices carry the nominal parameter values; the true plant
    adds independent uniform perturbations (within +/-0.1 on the four
    dynamics entries, +/-0.05 on the two input gains) drawn from the given
    seed.  No seed means zero perturbation: the plant equals the model.  The
    steering gain uses a unit loop gain scaling the -1 and 1/lookahead
    entries, applied identically on both actuation channels.
    """
    a_nom = np.array(_NOM_A)
    b_nom = np.array(_NOM_B)
    if perturbation_seed is None:
        a_true, b_true = a_nom, b_nom
    else:
        rng = np.random.default_rng(perturbation_seed)
        a_true = a_nom + rng.uniform(-_A_JITTER, _A_JITTER, size=(2, 2))
        b_true = b_nom + rng.uniform(-_B_JITTER, _B_JITTER, size=2)
    a_hat, b_hat = _vehicle_matrices(a_nom, b_nom)
    a_full, b_full = _vehicle_matrices(a_true, b_true)
    gain_row = [0.0, 0.0, -1.0, 1.0 / _LOOKAHEAD]
    return Scenario(
        plant=Plant(A=a_full, B=b_full),
        model=NominalModel(A_hat=a_hat, B_hat=b_hat),
        gain=Gain(K=np.array([gain_row, gain_row])),
        estimator=EstimatorKind.MODEL_BASED,
        trigger=TriggerConfig(beta=0.5, alpha=0.25),
        channel=ChannelPolicy(M=5, mode=ChannelMode.WORST_CASE),
        x0=np.array([0.0, 0.0, 0.2, 1.0]),
        t_max=60.0,
        sample_dt=1e-3,
        event_tol=1e-9,
    )


# --- scenario JSON ------------------------------------------------------------

def scenario_to_dict(scn: Scenario) -> dict[str, Any]:
    channel: dict[str, Any] = {"M": scn.channel.M, "mode": scn.channel.mode.value}
    if scn.channel.p is not None:
        channel["p"] = scn.channel.p
    if scn.channel.seed is not None:
        channel["seed"] = scn.channel.seed
    if scn.channel.script is not None:
        channel["script"] = [int(v) for v in scn.channel.script]
    return {
        "plant": {"A": scn.plant.A.tolist(), "B": scn.plant.B.tolist()},
        "model": {
            "A_hat": scn.model.A_hat.tolist(),
            "B_hat": scn.model.B_hat.tolist(),
        },
        "gain": {"K": scn.gain.K.tolist()},
        "estimator": scn.estimator.value,
        "trigger": {"beta": scn.trigger.beta, "alpha": scn.trigger.alpha},
        "channel": channel,
        "sim": {
            "x0": scn.x0.tolist(),
            "t_max": scn.t_max,
            "sample_dt": scn.sample_dt,
            "event_tol": scn.event_tol,
        },
    }


def save_scenario(scn: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scn), fh, indent=2)
        fh.write("\n")


def _matrix(value: Any, key: str, problems: list[str]) -> np.ndarray | None:
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        problems.append(f"{key}: not a numeric matrix")
        return None
    if arr.ndim not in (1, 2) or not np.all(np.isfinite(arr)):
        problems.append(f"{key}: must be a finite 1- or 2-d numeric array")
        return None
    return arr


def _number(value: Any, key: str, problems: list[str]) -> float | None:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append(f"{key}: must be a number, got {value!r}")
        return None
    if not math.isfinite(float(value)):
        problems.append(f"{key}: must be finite")
        return None
    return float(value)


def _section(doc: dict, key: str, problems: list[str]) -> dict:
    sec = doc.get(key)
    if not isinstance(sec, dict):
        problems.append(f"{key}: missing or not an object")
        return {}
    return sec


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    """Build a Scenario, collecting every violation before failing."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioFormatError(["document: top level must be an object"])

    plant_sec = _section(doc, "plant", problems)
    model_sec = _section(doc, "model", problems)
    gain_sec = _section(doc, "gain", problems)
    trig_sec = _section(doc, "trigger", problems)
    chan_sec = _section(doc, "channel", problems)
    sim_sec = _section(doc, "sim", problems)

    a = _matrix(plant_sec.get("A"), "plant.A", problems)
    b = _matrix(plant_sec.get("B"), "plant.B", problems)
    plant = None
    if a is not None and b is not None:
        try:
            plant = Plant(A=a, B=b)
        except ValueError as exc:
            problems.append(f"plant: {exc}")

    a_hat = _matrix(model_sec.get("A_hat"), "model.A_hat", problems)
    b_hat = _matrix(model_sec.get("B_hat"), "model.B_hat", problems)
    model = None
    if a_hat is not None and b_hat is not None:
        try:
            model = NominalModel(A_hat=a_hat, B_hat=b_hat)
        except ValueError as exc:
            problems.append(f"model: {exc}")

    k = _matrix(gain_sec.get("K"), "gain.K", problems)
    gain = None
    if k is not None:
        try:
            gain = Gain(K=k)
        except ValueError as exc:
            problems.append(f"gain.K: {exc}")

    estimator = None
    est_raw = doc.get("estimator")
    try:
        estimator = EstimatorKind(est_raw)
    except ValueError:
        problems.append(f"estimator: must be 'mb' or 'zoh', got {est_raw!r}")

    trigger = None
    beta = _number(trig_sec.get("beta"), "trigger.beta", problems)
    alpha = _number(trig_sec.get("alpha"), "trigger.alpha", problems)
    if beta is not None and alpha is not None:
        try:
            trigger = TriggerConfig(beta=beta, alpha=alpha)
        except ValueError as exc:
            key = "trigger.beta" if "beta" in str(exc) else "trigger.alpha"
            problems.append(f"{key}: {exc}")

    channel = None
    m_raw = chan_sec.get("M")
    mode_raw = chan_sec.get("mode")
    if not isinstance(m_raw, int) or isinstance(m_raw, bool):
        problems.append(f"channel.M: must be an integer, got {m_raw!r}")
    else:
        try:
            mode = ChannelMode(mode_raw)
        except ValueError:
            problems.append(
                f"channel.mode: must be one of "
                f"{[m.value for m in ChannelMode]}, got {mode_raw!r}"
            )
        else:
            script_raw = chan_sec.get("script")
            script = None
            if script_raw is not None:
                if not isinstance(script_raw, list):
                    problems.append("channel.script: must be a list of 0/1 flags")
                else:
                    script = tuple(bool(v) for v in script_raw)
            seed_raw = chan_sec.get("seed")
            if seed_raw is not None and (
                not isinstance(seed_raw, int) or isinstance(seed_raw, bool)
            ):
                problems.append(f"channel.seed: must be an integer, got {seed_raw!r}")
                seed_raw = None
            try:
                channel = ChannelPolicy(
                    M=m_raw,
                    mode=mode,
                    p=chan_sec.get("p"),
                    seed=seed_raw,
                    script=script,
                )
            except Exception as exc:
                msg = str(exc)
                if "script" in msg:
                    problems.append(f"channel.script: {msg}")
                elif "p" in msg.split() or "p " in msg or "needs p" in msg:
                    problems.append(f"channel.p: {msg}")
                else:
                    problems.append(f"channel: {msg}")

    x0 = _matrix(sim_sec.get("x0"), "sim.x0", problems)
    t_max = _number(sim_sec.get("t_max"), "sim.t_max", problems)
    sample_dt = _number(sim_sec.get("sample_dt"), "sim.sample_dt", problems)
    event_tol = _number(sim_sec.get("event_tol"), "sim.event_tol", problems)

    if problems:
        raise ScenarioFormatError(problems)
    assert plant and model and gain and trigger and channel and estimator
    try:
        return Scenario(
            plant=plant,
            model=model,
            gain=gain,
            estimator=estimator,
            trigger=trigger,
            channel=channel,
            x0=x0,
            t_max=t_max,
            sample_dt=sample_dt,
            event_tol=event_tol,
        )
    except ValueError as exc:
        msg = str(exc)
        key = "scenario"
        # Scan order matters: the event_tol message also names sample_dt,
        # and the sample_dt message also names t_max.
        for leaf, dotted in (
            ("event_tol", "sim.event_tol"),
            ("sample_dt", "sim.sample_dt"),
            ("t_max", "sim.t_max"),
            ("x0", "sim.x0"),
            ("gain", "gain.K"),
            ("model", "model"),
            ("estimator", "estimator"),
        ):
            if leaf in msg:
                key = dotted
                break
        raise ScenarioFormatError([f"{key}: {msg}"]) from exc


def _line_of(text: str, dotted_key: str) -> int | None:
    """Best-effort line number of a dotted key inside the raw document."""
    parts = dotted_key.split(".")
    pos = 0
    for part in parts:
        found = text.find(f'"{part}"', pos)
        if found < 0:
            return None
        pos = found
    return 1 + text.count("\n", 0, pos)


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario document, reporting all problems."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError([f"line {exc.lineno}: malformed JSON: {exc.msg}"])
    try:
        return scenario_from_dict(doc)
    except ScenarioFormatError as exc:
        annotated = []
        for problem in exc.problems:
            key = problem.split(":", 1)[0].strip()
            line = _line_of(text, key)
            annotated.append(f"line {line}: {problem}" if line else problem)
        raise ScenarioFormatError(annotated) from None


# --- trace CSV ----------------------------------------------------------------

def save_trace(tr: Trace, path: str) -> None:
    """Write the trace as CSV with exact (17-significant-digit) numbers."""
    n = tr.x.shape[1]
    header = (
        ["t"]
        + [f"x_{i}" for i in range(n)]
        + [f"xs_{i}" for i in range(n)]
        + [f"xc_{i}" for i in range(n)]
        + ["es_norm", "ec_norm", "threshold", "triggered", "delivered"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(tr.num_samples):
            row = (
                [f"{tr.t[i]:.17g}"]
                + [f"{v:.17g}" for v in tr.x[i]]
                + [f"{v:.17g}" for v in tr.x_s[i]]
                + [f"{v:.17g}" for v in tr.x_c[i]]
                + [
                    f"{tr.e_s_norm[i]:.17g}",
                    f"{tr.e_c_norm[i]:.17g}",
                    f"{tr.threshold[i]:.17g}",
                    str(int(tr.triggered[i])),
                    str(int(tr.delivered[i])),
                ]
            )
            writer.writerow(row)


def load_trace(path: str) -> Trace:
    """Parse a trace CSV back into arrays; exact round-trip of save_trace."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    n = (len(header) - 6) // 3
    expected = (
        ["t"]
        + [f"x_{i}" for i in range(n)]
        + [f"xs_{i}" for i in range(n)]
        + [f"xc_{i}" for i in range(n)]
        + ["es_norm", "ec_norm", "threshold", "triggered", "delivered"]
    )
    if header != expected:
        raise ValueError(f"unexpected trace header {header!r}")
    data = np.array([[float(v) for v in row] for row in rows])
    if data.size == 0:
        data = data.reshape(0, len(header))
    t = data[:, 0]
    x = data[:, 1 : 1 + n]
    x_s = data[:, 1 + n : 1 + 2 * n]
    x_c = data[:, 1 + 2 * n : 1 + 3 * n]
    es, ec, thr = data[:, 1 + 3 * n], data[:, 2 + 3 * n], data[:, 3 + 3 * n]
    trig = data[:, 4 + 3 * n] != 0.0
    deliv = data[:, 5 + 3 * n] != 0.0
    arrays = dict(
        t=t, x=x, x_s=x_s, x_c=x_c, e_s_norm=es, e_c_norm=ec, threshold=thr,
        triggered=trig, delivered=deliv,
        triggers=t[trig].copy(), deliveries=t[deliv].copy(),
    )
    for arr in arrays.values():
        arr.flags.writeable = False
    return Trace(**arrays)


# --- report JSON --------------------------------------------------------------

def bounds_report_to_dict(rep: BoundsReport) -> dict[str, Any]:
    return {
        "Delta": rep.Delta,
        "delta_bar": list(rep.delta_bar),
        "delta_tilde": list(rep.delta_tilde),
        "miet": rep.miet,
        "F_bar": rep.F_bar,
        "F_cap": rep.F_cap,
        "F_bold": rep.F_bold,
        "a_hat": rep.a_hat,
        "a_tilde": rep.a_tilde,
        "envelopes": {
            name: {"c": env.c, "rate": env.rate}
            for name, env in rep.envelopes.items()
        },
        "x0_norm": rep.x0_norm,
    }


def zoh_report_to_dict(rep: ZohBoundsReport) -> dict[str, Any]:
    return {
        "Delta_zoh": rep.Delta_zoh,
        "delta_bar_zoh": list(rep.delta_bar_zoh),
        "growth": {"eta": rep.growth.eta, "gamma": rep.growth.gamma},
        "state_norms": list(rep.state_norms),
    }


def subspace_report_to_dict(rep: SubspaceReport) -> dict[str, Any]:
    return {"residual": rep.residual, "basis_dim": rep.basis_dim}


def summary_to_dict(stats: SummaryStats) -> dict[str, Any]:
    return {
        "trigger_count": stats.trigger_count,
        "delivery_count": stats.delivery_count,
        "min_inter_event": stats.min_inter_event,
        "mean_inter_event": stats.mean_inter_event,
        "min_receive_interval": stats.min_receive_interval,
        "mean_receive_interval": stats.mean_receive_interval,
        "final_state_norm": stats.final_state_norm,
        "empirical_amplification": stats.empirical_amplification,
    }
