"""Two-interval speed-discrimination protocol: schedules, sessions,
and aggregation.

A trial presents two texture intervals in randomized order: one at the
reference speed with an offset spatial frequency, the other at the
reference frequency with an offset speed.  A session is an append-only
log of such trials; persistence is line-oriented JSON so interrupted
sessions stay loadable.  Aggregation reduces responses to per-cell
choice fractions, where a cell is one (speed offset, frequency offset)
combination and the fraction counts how often the speed-offset
interval was judged faster.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigurationError, ConflictError, SessionFormatError
from .params import (
    MCParams,
    convert_mode_std,
    params_from_config,
    params_to_config,
)

__all__ = [
    "ExperimentConfig",
    "SessionStore",
    "TrialRecord",
    "aggregate",
    "build_schedule",
    "load_session",
    "persist_session",
    "write_aggregate_csv",
]

_RESPONSES = ("first", "second")
_FORMAT_TAG = "mclab-session-v1"


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol definition for one discrimination session.

    The offset grids are crossed: each trial draws one cell (du, dz)
    and compares a stimulus at speed u_star + du and frequency z_star
    against one at speed u_star and frequency z_star + dz.  The
    remaining fields fix the texture family: vertical-wavevector
    orientation, frequency-width scale d_z, and the temporal scale
    t_star that ties the speed width to the frequency mode.
    """

    z_star: float = 1.28
    u_star: float = 10.0
    t_star: float = 0.2
    delta_u: Tuple[float, ...] = (-2.0, -1.0, 0.0, 1.0, 2.0)
    delta_z: Tuple[float, ...] = (-0.48, -0.21, 0.0, 0.32, 0.85)
    reps_per_cell: int = 10
    theta0: float = math.pi / 2
    sigma_theta: float = math.pi / 12
    d_z: float = 1.0
    stimulus_ms: float = 250.0
    isi_ms: float = 250.0

    def __post_init__(self):
        object.__setattr__(self, "delta_u",
                           tuple(float(v) for v in self.delta_u))
        object.__setattr__(self, "delta_z",
                           tuple(float(v) for v in self.delta_z))
        for name in ("z_star", "u_star", "t_star", "sigma_theta", "d_z",
                     "stimulus_ms"):
            if not getattr(self, name) > 0.0:
                raise ConfigurationError(f"{name} must be positive")
        if self.isi_ms < 0.0:
            raise ConfigurationError("isi_ms must be non-negative")
        if self.reps_per_cell != int(self.reps_per_cell) \
                or self.reps_per_cell < 1:
            raise ConfigurationError("reps_per_cell must be a positive "
                                     "integer")
        object.__setattr__(self, "reps_per_cell", int(self.reps_per_cell))
        if not self.delta_u or not self.delta_z:
            raise ConfigurationError("offset grids must be non-empty")
        for du in self.delta_u:
            if self.u_star + du <= 0.0:
                raise ConfigurationError(
                    f"speed offset {du:g} drives the stimulus speed to "
                    f"{self.u_star + du:g} deg/s; it must stay positive")
        for dz in self.delta_z:
            if self.z_star + dz <= 0.0:
                raise ConfigurationError(
                    f"frequency offset {dz:g} drives the stimulus "
                    f"frequency to {self.z_star + dz:g} c/deg; it must "
                    f"stay positive")


@dataclass
class TrialRecord:
    """One two-interval trial, fully resolved for rendering.

    pair holds (speed deg/s, frequency c/deg) per interval in
    presentation order; u_offset_interval says which of the two carries
    the speed offset (the other carries the frequency offset).  The
    response names the interval judged faster and is set exactly once,
    through SessionStore.record_response.
    """

    trial_id: str
    du: float
    dz: float
    t_star: float
    pair: Tuple[Tuple[float, float], Tuple[float, float]]
    u_offset_interval: int
    stim_params: Tuple[MCParams, MCParams]
    stim_seeds: Tuple[int, int]
    response: Optional[str] = None
    response_time_ms: Optional[float] = None
    flagged: bool = False
    presented_ms: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if len(self.pair) != 2 or len(self.stim_params) != 2 \
                or len(self.stim_seeds) != 2:
            raise ConfigurationError("a trial carries exactly two intervals")
        self.pair = tuple((float(u), float(z)) for u, z in self.pair)
        self.stim_params = tuple(self.stim_params)
        self.stim_seeds = tuple(int(s) for s in self.stim_seeds)
        if self.presented_ms is not None:
            self.presented_ms = tuple(float(t) for t in self.presented_ms)
        if self.u_offset_interval not in (0, 1):
            raise ConfigurationError("u_offset_interval must be 0 or 1")
        if self.response is not None and self.response not in _RESPONSES:
            raise ConfigurationError(
                f"response must be one of {_RESPONSES}, got "
                f"{self.response!r}")


@dataclass
class SessionStore:
    """Ordered, append-only record of one session's trials.

    The status is derived rather than stored: a session is active until
    every trial has a response, then completed.  Completed sessions are
    immutable because every write targets an unanswered trial.
    """

    session_id: str
    config: ExperimentConfig
    trials: List[TrialRecord] = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.trials and all(t.response is not None for t in self.trials):
            return "completed"
        return "active"

    def trial(self, trial_id: str) -> TrialRecord:
        for trial in self.trials:
            if trial.trial_id == trial_id:
                return trial
        raise KeyError(f"session {self.session_id!r} has no trial "
                       f"{trial_id!r}")

    def next_unanswered(self) -> Optional[TrialRecord]:
        for trial in self.trials:
            if trial.response is None:
                return trial
        return None

    def record_response(self, trial_id: str, response: str,
                        response_time_ms: Optional[float] = None,
                        flagged: bool = False,
                        presented_ms=None) -> TrialRecord:
        """Record which interval was judged faster, exactly once.

        presented_ms optionally carries the client's presentation
        timestamps (phase onsets on its own clock); they are stored
        verbatim for offline timing audits.
        """
        trial = self.trial(trial_id)
        if response not in _RESPONSES:
            raise ConfigurationError(
                f"response must be one of {_RESPONSES}, got {response!r}")
        if trial.response is not None:
            raise ConflictError(
                f"trial {trial_id!r} already has a response")
        trial.response = response
        trial.response_time_ms = (None if response_time_ms is None
                                  else float(response_time_ms))
        trial.flagged = bool(flagged)
        trial.presented_ms = (None if presented_ms is None
                              else tuple(float(t) for t in presented_ms))
        return trial


def build_schedule(config: ExperimentConfig, seed: int) -> List[TrialRecord]:
    """Materialize the randomized trial list for one session.

    Every cell of the offset grid appears reps_per_cell times, in a
    uniformly shuffled order; which interval carries the speed offset
    is a per-trial coin; each interval gets its own synthesis seed.
    Texture parameters are resolved per stimulus: frequency mode and
    width come from the mode/width-scale conversion at that stimulus
    frequency, and the speed width is tied to the temporal scale
    through sigma_r = 1 / (t_star * z0).
    """
    rng = np.random.default_rng(seed)
    cells = [(du, dz) for du in config.delta_u for dz in config.delta_z]
    n_trials = len(cells) * config.reps_per_cell
    order = rng.permutation(n_trials)
    coins = rng.integers(0, 2, size=n_trials)
    seeds = rng.integers(0, 2 ** 32, size=(n_trials, 2))

    resolved = {}

    def stimulus(u: float, z: float) -> MCParams:
        if z not in resolved:
            z0, sigma_z = convert_mode_std(z, config.d_z)
            resolved[z] = (z0, sigma_z, 1.0 / (config.t_star * z0))
        z0, sigma_z, sigma_r = resolved[z]
        return MCParams(v0=(u, 0.0), theta0=config.theta0,
                        sigma_theta=config.sigma_theta, z0=z0,
                        sigma_z=sigma_z, sigma_r=sigma_r)

    trials = []
    for idx in range(n_trials):
        du, dz = cells[order[idx] % len(cells)]
        j = int(coins[idx])
        pair = [None, None]
        pair[j] = (config.u_star + du, config.z_star)
        pair[1 - j] = (config.u_star, config.z_star + dz)
        trials.append(TrialRecord(
            trial_id=f"t{idx:04d}",
            du=du,
            dz=dz,
            t_star=config.t_star,
            pair=tuple(pair),
            u_offset_interval=j,
            stim_params=tuple(stimulus(u, z) for u, z in pair),
            stim_seeds=tuple(int(s) for s in seeds[idx]),
        ))
    return trials


def aggregate(session: SessionStore
              ) -> Dict[Tuple[float, float], Tuple[int, float]]:
    """Reduce responses to per-cell counts and choice fractions.

    Keys are (speed offset, frequency offset) cells; values are
    (n, phat) where phat is the fraction of answered trials in which
    the speed-offset interval was judged faster.  Unanswered trials are
    skipped.  Flagged trials count: exclusion is a fitting-stage
    policy, not an aggregation one.
    """
    tallies = {}
    for trial in session.trials:
        if trial.response is None:
            continue
        cell = tallies.setdefault((trial.du, trial.dz), [0, 0])
        cell[0] += 1
        chose_offset = ((trial.response == "first")
                        == (trial.u_offset_interval == 0))
        cell[1] += int(chose_offset)
    return {key: (n, k / n) for key, (n, k) in tallies.items()}


def _config_to_json(config: ExperimentConfig) -> dict:
    return {
        "z_star": config.z_star,
        "u_star": config.u_star,
        "t_star": config.t_star,
        "delta_u": list(config.delta_u),
        "delta_z": list(config.delta_z),
        "reps_per_cell": config.reps_per_cell,
        "theta0": config.theta0,
        "sigma_theta": config.sigma_theta,
        "d_z": config.d_z,
        "stimulus_ms": config.stimulus_ms,
        "isi_ms": config.isi_ms,
    }


def _trial_to_json(trial: TrialRecord) -> dict:
    return {
        "trial_id": trial.trial_id,
        "du": trial.du,
        "dz": trial.dz,
        "t_star": trial.t_star,
        "pair": [list(stim) for stim in trial.pair],
        "u_offset_interval": trial.u_offset_interval,
        "stim_params": [params_to_config(p) for p in trial.stim_params],
        "stim_seeds": list(trial.stim_seeds),
        "response": trial.response,
        "response_time_ms": trial.response_time_ms,
        "flagged": trial.flagged,
        "presented_ms": (None if trial.presented_ms is None
                         else list(trial.presented_ms)),
    }


def persist_session(session: SessionStore, path) -> None:
    """Write a session as line-oriented JSON: one header line carrying
    the session id and config, then one line per trial in order."""
    with open(path, "w", encoding="utf-8") as stream:
        header = {"format": _FORMAT_TAG,
                  "session_id": session.session_id,
                  "config": _config_to_json(session.config)}
        stream.write(json.dumps(header) + "\n")
        for trial in session.trials:
            stream.write(json.dumps(_trial_to_json(trial)) + "\n")


def load_session(path) -> SessionStore:
    """Rebuild a session from its line-oriented JSON file.

    Any unreadable line raises a format error naming the line number
    and the last trial that was still intact, which makes a truncated
    file (a writer that died mid-line) diagnosable at a glance.
    """
    with open(path, "r", encoding="utf-8") as stream:
        lines = stream.read().splitlines()

    def fail(line_no, reason, last_id):
        where = (f"last valid trial: {last_id}" if last_id
                 else "no valid trials before it")
        raise SessionFormatError(
            f"{path}, line {line_no}: {reason}; {where}")

    if not lines:
        fail(1, "empty file, expected a session header", None)
    try:
        header = json.loads(lines[0])
        if header.get("format") != _FORMAT_TAG:
            raise ConfigurationError(
                f"unrecognized session format {header.get('format')!r}")
        session_id = header["session_id"]
        config = ExperimentConfig(**header["config"])
    except (ValueError, KeyError, TypeError) as exc:
        fail(1, f"unreadable session header ({exc})", None)

    trials = []
    last_id = None
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            trial = TrialRecord(
                trial_id=doc["trial_id"],
                du=float(doc["du"]),
                dz=float(doc["dz"]),
                t_star=float(doc["t_star"]),
                pair=tuple(tuple(float(v) for v in stim)
                           for stim in doc["pair"]),
                u_offset_interval=int(doc["u_offset_interval"]),
                stim_params=tuple(params_from_config(c)
                                  for c in doc["stim_params"]),
                stim_seeds=tuple(int(s) for s in doc["stim_seeds"]),
                response=doc["response"],
                response_time_ms=doc["response_time_ms"],
                flagged=bool(doc["flagged"]),
                presented_ms=doc.get("presented_ms"),
            )
        except (ValueError, KeyError, TypeError) as exc:
            fail(line_no, f"unreadable trial record ({exc})", last_id)
        trials.append(trial)
        last_id = trial.trial_id
    return SessionStore(session_id=session_id, config=config, trials=trials)


def write_aggregate_csv(table: Dict[Tuple[float, float], Tuple[int, float]],
                        path) -> None:
    """Write an aggregate table as CSV with columns du, dz, n, phat,
    one row per cell, sorted by cell."""
    with open(path, "w", encoding="utf-8") as stream:
        stream.write("du,dz,n,phat\n")
        for du, dz in sorted(table):
            n, phat = table[(du, dz)]
            stream.write(f"{du!r},{dz!r},{n},{phat!r}\n")
