"""HTTP service that runs two-interval sessions for browser clients.

App factory over two directory-backed stores: sessions persist as
line-oriented JSON after every response, and stimuli render on demand
into a content-addressed cache of quantized frames.  Everything above
those stores is derived per request, so a restarted process reloads the
session files and resumes each session at its next unanswered trial.

Stimulus bytes are unsigned 8-bit gray, frame-major then row-major,
exactly width x height x n_frames long; the meta endpoint carries the
quantization constants a client needs to interpret the gray levels.
"""

import hashlib
import json
import os
import secrets
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from fastapi import Body, FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware

from .appconfig import AppConfig
from .errors import ConfigurationError, ConflictError
from .experiment import (ExperimentConfig, SessionStore, _config_to_json,
                         aggregate, build_schedule, load_session,
                         persist_session)
from .frameio import QUANT_GAIN, QUANT_OFFSET, quantize_frames
from .grid import GridSpec
from .params import MCParams, params_to_config
from .psychfit import fit_psychometric
from .synth import grid_with_stable_substep, synth_frames

__all__ = ["create_app", "stimulus_id"]


@dataclass(frozen=True)
class _StimulusSpec:
    params: MCParams
    grid: GridSpec
    n_frames: int
    seed: int


def stimulus_id(params: MCParams, grid: GridSpec, n_frames: int,
                seed: int) -> str:
    """Content hash naming one renderable stimulus.

    Identical parameters, grid, length, and seed always map to the same
    id, so the frame cache is shared across sessions and restarts.
    """
    canonical = json.dumps({
        "params": params_to_config(params),
        "grid": grid.to_dict(),
        "n_frames": int(n_frames),
        "seed": int(seed),
    }, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:32]


class _Service:
    """All mutable service state: session registry, per-session locks,
    stimulus registry, and the two cache directories."""

    def __init__(self, config: AppConfig):
        self.config = config
        self._registry_lock = threading.Lock()
        self._sessions: Dict[str, SessionStore] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._stimuli: Dict[str, _StimulusSpec] = {}
        for path in sorted(config.sessions_dir.glob("*.jsonl")):
            store = load_session(path)
            self._sessions[store.session_id] = store
            self._locks[store.session_id] = threading.Lock()
            self._register_stimuli(store)

    # -- sessions ----------------------------------------------------

    def create_session(self, payload: Optional[Dict[str, Any]]) -> dict:
        payload = dict(payload or {})
        seed = payload.pop("seed", None)
        if seed is None:
            seed = secrets.randbits(31)
        elif not isinstance(seed, int) or isinstance(seed, bool) \
                or seed < 0:
            raise HTTPException(400, "seed must be a non-negative integer")

        base = _config_to_json(self.config.experiment)
        unknown = set(payload) - set(base)
        if unknown:
            raise HTTPException(
                400, f"unknown session fields: {sorted(unknown)}")
        base.update(payload)
        try:
            config = ExperimentConfig(**base)
            trials = build_schedule(config, seed)
        except ConfigurationError as exc:
            raise HTTPException(400, str(exc))

        session_id = uuid.uuid4().hex[:16]
        store = SessionStore(session_id=session_id, config=config,
                             trials=trials)
        with self._registry_lock:
            self._sessions[session_id] = store
            self._locks[session_id] = threading.Lock()
        self._register_stimuli(store)
        self._persist(store)
        return {"session_id": session_id}

    def _get(self, session_id: str):
        with self._registry_lock:
            store = self._sessions.get(session_id)
            lock = self._locks.get(session_id)
        if store is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return store, lock

    def _persist(self, store: SessionStore) -> None:
        # write-then-rename keeps the file whole even if the process
        # dies mid-write
        final = self.config.sessions_dir / f"{store.session_id}.jsonl"
        tmp = final.with_name(f".{final.name}.{uuid.uuid4().hex}.tmp")
        persist_session(store, tmp)
        os.replace(tmp, final)

    def next_trial(self, session_id: str) -> dict:
        store, lock = self._get(session_id)
        with lock:
            trial = store.next_unanswered()
        if trial is None:
            return {"done": True}
        ids = [self._trial_stimulus_id(store.config, trial, j)
               for j in (0, 1)]
        return {
            "trial_id": trial.trial_id,
            "stim_a": ids[0],
            "stim_b": ids[1],
            "stimulus_ms": store.config.stimulus_ms,
            "isi_ms": store.config.isi_ms,
        }

    def record_response(self, session_id: str,
                        payload: Dict[str, Any]) -> dict:
        store, lock = self._get(session_id)
        trial_id = payload.get("trial_id")
        if not isinstance(trial_id, str):
            raise HTTPException(400, "trial_id must be a string")
        choice = payload.get("choice")
        with lock:
            try:
                store.record_response(
                    trial_id, choice,
                    response_time_ms=payload.get("rt_ms"),
                    flagged=bool(payload.get("flagged", False)),
                    presented_ms=payload.get("presented_ms"))
            except KeyError as exc:
                raise HTTPException(404, exc.args[0])
            except ConflictError as exc:
                raise HTTPException(409, str(exc))
            except (ConfigurationError, ValueError, TypeError) as exc:
                raise HTTPException(400, str(exc))
            self._persist(store)
        return {"accepted": True}

    def results(self, session_id: str) -> dict:
        store, lock = self._get(session_id)
        with lock:
            status = store.status
            table = aggregate(store)
            n_answered = sum(t.response is not None for t in store.trials)
            report = {
                "session_id": session_id,
                "status": status,
                "n_trials": len(store.trials),
                "n_answered": n_answered,
                "aggregate": [
                    {"du": du, "dz": dz, "n": n, "phat": phat}
                    for (du, dz), (n, phat) in sorted(table.items())
                ],
            }
            if status == "completed":
                fits = fit_psychometric(store.trials)
                report["fit"] = {"conditions": [
                    {"z": key[0], "z_star": key[1], "u_star": key[2],
                     "t_star": key[3], "mu": fit.mu, "lam": fit.lam,
                     "mu_se": fit.mu_se, "lam_se": fit.lam_se,
                     "n_trials": fit.n_trials}
                    for key, fit in sorted(fits.items())
                ]}
        return report

    # -- stimuli -----------------------------------------------------

    def _stimulus_spec(self, config: ExperimentConfig, params: MCParams,
                      seed: int) -> _StimulusSpec:
        g = self.config.grid
        grid = grid_with_stable_substep(params, g.nx, g.ny, g.ppd, g.fps)
        n_frames = max(1, round(config.stimulus_ms / 1000.0 * g.fps))
        return _StimulusSpec(params=params, grid=grid,
                             n_frames=n_frames, seed=seed)

    def _trial_stimulus_id(self, config: ExperimentConfig, trial,
                           interval: int) -> str:
        spec = self._stimulus_spec(config, trial.stim_params[interval],
                                   trial.stim_seeds[interval])
        return stimulus_id(spec.params, spec.grid, spec.n_frames,
                           spec.seed)

    def _register_stimuli(self, store: SessionStore) -> None:
        with self._registry_lock:
            for trial in store.trials:
                for params, seed in zip(trial.stim_params,
                                        trial.stim_seeds):
                    spec = self._stimulus_spec(store.config, params, seed)
                    sid = stimulus_id(spec.params, spec.grid,
                                      spec.n_frames, spec.seed)
                    self._stimuli.setdefault(sid, spec)

    def _ensure_rendered(self, sid: str):
        with self._registry_lock:
            spec = self._stimuli.get(sid)
        if spec is None:
            raise HTTPException(404, f"unknown stimulus {sid!r}")
        frames_path = self.config.stimuli_dir / f"{sid}.u8"
        meta_path = self.config.stimuli_dir / f"{sid}.json"
        if frames_path.exists() and meta_path.exists():
            return frames_path, json.loads(meta_path.read_text())

        stack = synth_frames(spec.params, spec.grid, spec.n_frames,
                             spec.seed)
        u8, sigma = quantize_frames(stack.frames)
        meta = {
            "width": spec.grid.nx,
            "height": spec.grid.ny,
            "n_frames": spec.n_frames,
            "fps": spec.grid.fps,
            "quantization": {"offset": QUANT_OFFSET, "gain": QUANT_GAIN,
                             "sigma_i": sigma},
        }
        # concurrent renders produce identical bytes, so last-wins
        # replace is safe; rename keeps cache hits all-or-nothing
        self.config.stimuli_dir.mkdir(parents=True, exist_ok=True)
        for target, data in ((frames_path, u8.tobytes()),
                             (meta_path, (json.dumps(meta, sort_keys=True)
                                          + "\n").encode())):
            tmp = target.with_name(
                f".{target.name}.{uuid.uuid4().hex}.tmp")
            tmp.write_bytes(data)
            os.replace(tmp, target)
        return frames_path, meta

    def stimulus_meta(self, sid: str) -> dict:
        _, meta = self._ensure_rendered(sid)
        return meta

    def stimulus_frames(self, sid: str) -> bytes:
        frames_path, _ = self._ensure_rendered(sid)
        return frames_path.read_bytes()


def create_app(config: Optional[AppConfig] = None) -> FastAPI:
    """Build the service app over one application config."""
    service = _Service(config if config is not None else AppConfig())
    app = FastAPI(title="mclab experiment service")
    app.state.service = service
    # the browser runner may be served from any static host
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.post("/api/sessions")
    def create_session(payload: Optional[Dict[str, Any]] = Body(None)):
        return service.create_session(payload)

    @app.get("/api/sessions/{session_id}/trials/next")
    def next_trial(session_id: str):
        return service.next_trial(session_id)

    @app.post("/api/sessions/{session_id}/responses")
    def record_response(session_id: str,
                        payload: Dict[str, Any] = Body(...)):
        return service.record_response(session_id, payload)

    @app.get("/api/sessions/{session_id}/results")
    def results(session_id: str):
        return service.results(session_id)

    @app.get("/api/stimuli/{sid}/meta")
    def stimulus_meta(sid: str):
        return service.stimulus_meta(sid)

    @app.get("/api/stimuli/{sid}/frames")
    def stimulus_frames(sid: str):
        return Response(content=service.stimulus_frames(sid),
                        media_type="application/octet-stream")

    return app
