"""Session-oriented HTTP/JSON service for the semi-automated decision loop.

Wraps SessionRunner: one logical writer per session (mutations serialized
by a per-session lock), read-only queries concurrent. Every response
carries the scenario hash and the session's event index so clients can
validate their caches. JSON field names carry units (…_m, …_sek, …_weeks).

Endpoints (also discoverable at /docs and /openapi.json):
  POST /sessions                       create a session
  GET  /sessions/{id}                  current posterior summary
  POST /sessions/{id}/measurements    add one settlement observation
  GET  /sessions/{id}/recommendation  heuristic suggestion + rationale
  GET  /sessions/{id}/whatif          read-only increment exploration
  POST /sessions/{id}/actions         commit the engineer's choice
  POST /sessions/{id}/close           close the session
  GET  /sessions/{id}/log             the append-only event log
"""

from __future__ import annotations

import os
import threading
from pathlib import Path

from fastapi import Body, FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .errors import ScenarioError, UnsupportedActionError
from .policy import HeuristicParams
from .scenario import Scenario
from .sessions import STATUS_CLOSED, STATUS_PENDING, SessionRunner


class _Sessions:
    def __init__(self):
        self._lock = threading.Lock()
        self._runners: dict[str, SessionRunner] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._counter = 0

    def create(self, runner: SessionRunner) -> str:
        with self._lock:
            self._counter += 1
            sid = f"s{self._counter:06d}"
            self._runners[sid] = runner
            self._locks[sid] = threading.Lock()
            return sid

    def get(self, sid: str) -> tuple[SessionRunner, threading.Lock]:
        with self._lock:
            if sid not in self._runners:
                raise HTTPException(status_code=404, detail=f"no session {sid}")
            return self._runners[sid], self._locks[sid]


def create_app(scenario: Scenario) -> FastAPI:
    app = FastAPI(title="preloadtwin twin service", version="0.1.0")
    sessions = _Sessions()

    @app.exception_handler(ScenarioError)
    async def scenario_error_handler(request, exc: ScenarioError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "scenario_hash": scenario.hash()}

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(...)):
        if not isinstance(payload, dict):
            raise HTTPException(status_code=422, detail="body must be a JSON object")
        unknown = set(payload) - {"seed", "heuristic", "n_particles", "scenario_overrides"}
        if unknown:
            raise HTTPException(status_code=422, detail=f"unknown keys {sorted(unknown)}")
        seed = payload.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise HTTPException(status_code=422, detail="seed must be an integer")
        scn = scenario
        overrides = payload.get("scenario_overrides")
        if overrides is not None:
            if not isinstance(overrides, dict):
                raise HTTPException(status_code=422, detail="scenario_overrides must be a mapping")
            try:
                scn = scenario.with_overrides(overrides)
            except ScenarioError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        heuristic = None
        h = payload.get("heuristic")
        if h is not None:
            if not isinstance(h, dict) or not {"h0_m", "cov_th", "p_th"} >= set(h):
                raise HTTPException(
                    status_code=422,
                    detail="heuristic accepts keys h0_m, cov_th, p_th",
                )
            try:
                heuristic = HeuristicParams(
                    h0=float(h.get("h0_m", scn.heuristic.h0)),
                    cov_th=float(h.get("cov_th", scn.heuristic.cov_th)),
                    p_th=float(h.get("p_th", scn.heuristic.p_th)),
                )
            except (ScenarioError, TypeError, ValueError) as exc:
                raise HTTPException(status_code=422, detail=f"heuristic: {exc}")
        n_particles = payload.get("n_particles")
        if n_particles is not None and (not isinstance(n_particles, int) or n_particles < 2):
            raise HTTPException(status_code=422, detail="n_particles must be an integer >= 2")
        try:
            runner = SessionRunner(scn, seed, heuristic, n_particles)
        except ScenarioError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        sid = sessions.create(runner)
        return {"session_id": sid, **runner.summary()}

    @app.get("/sessions/{sid}")
    def get_summary(sid: str):
        runner, _ = sessions.get(sid)
        return runner.summary()

    @app.post("/sessions/{sid}/measurements")
    def add_measurement(sid: str, payload: dict = Body(...)):
        runner, lock = sessions.get(sid)
        unknown = set(payload) - {"t_weeks", "z_s_m"}
        if unknown:
            raise HTTPException(status_code=422, detail=f"unknown keys {sorted(unknown)}")
        if "t_weeks" not in payload or "z_s_m" not in payload:
            raise HTTPException(status_code=422, detail="need t_weeks and z_s_m")
        t = payload["t_weeks"]
        z = payload["z_s_m"]
        if not isinstance(t, int) or isinstance(t, bool) or not isinstance(z, (int, float)):
            raise HTTPException(status_code=422, detail="t_weeks must be int, z_s_m a number")
        with lock:
            if runner.status == STATUS_CLOSED:
                raise HTTPException(status_code=410, detail="session is closed")
            if runner.measurements and t <= runner.measurements[-1]["t"]:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"measurement at week {t} not after last measured week "
                        f"{runner.measurements[-1]['t']}"
                    ),
                )
            if t > runner.scenario.requirements.t_max:
                raise HTTPException(
                    status_code=409,
                    detail=f"week {t} beyond the horizon {runner.scenario.requirements.t_max}",
                )
            return runner.add_measurement(t, float(z))

    @app.get("/sessions/{sid}/recommendation")
    def get_recommendation(sid: str):
        runner, _ = sessions.get(sid)
        return {
            "scenario_hash": runner.scenario.hash(),
            "event_index": runner.event_index,
            "session_status": runner.status,
            "recommendation": runner.recommendation(),
        }

    @app.get("/sessions/{sid}/whatif")
    def whatif(sid: str, h_add_m: float, fast: bool = False):
        runner, _ = sessions.get(sid)
        if runner.status != STATUS_PENDING:
            raise HTTPException(
                status_code=409,
                detail=f"what-if requires status {STATUS_PENDING}, session is {runner.status}",
            )
        if h_add_m < 0:
            raise HTTPException(status_code=422, detail="h_add_m must be >= 0")
        return runner.whatif(float(h_add_m), fast=fast)

    @app.post("/sessions/{sid}/actions")
    def commit_action(sid: str, payload: dict = Body(...)):
        runner, lock = sessions.get(sid)
        unknown = set(payload) - {"h_add_m", "expected_event_index"}
        if unknown:
            raise HTTPException(status_code=422, detail=f"unknown keys {sorted(unknown)}")
        if "h_add_m" not in payload or not isinstance(payload["h_add_m"], (int, float)):
            raise HTTPException(status_code=422, detail="need numeric h_add_m")
        with lock:
            expected = payload.get("expected_event_index")
            if expected is not None and expected != runner.event_index:
                raise HTTPException(
                    status_code=409,
                    detail=(
                        f"event index moved ({expected} != {runner.event_index}); "
                        "refresh before committing"
                    ),
                )
            if runner.status == STATUS_CLOSED:
                raise HTTPException(status_code=410, detail="session is closed")
            if runner.status != STATUS_PENDING:
                raise HTTPException(
                    status_code=409,
                    detail=f"commit requires status {STATUS_PENDING}, session is {runner.status}",
                )
            try:
                return runner.commit_action(float(payload["h_add_m"]))
            except UnsupportedActionError as exc:
                raise HTTPException(status_code=409, detail=str(exc))

    @app.post("/sessions/{sid}/close")
    def close_session(sid: str):
        runner, lock = sessions.get(sid)
        with lock:
            if runner.status == STATUS_CLOSED:
                raise HTTPException(status_code=410, detail="session already closed")
            return runner.close()

    @app.get("/sessions/{sid}/log")
    def get_log(sid: str):
        runner, _ = sessions.get(sid)
        return {
            "scenario_hash": runner.scenario.hash(),
            "event_index": runner.event_index,
            "header": runner.log.header(),
            "events": runner.log.events,
        }

    dist = os.environ.get("PRELOADTWIN_DASHBOARD_DIST", "frontend/dist")
    if Path(dist).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=dist, html=True), name="dashboard")

    return app
