"""Real-time WebSocket service hosting one interactive episode per client.

Protocol (text frames, JSON bodies). Client -> server message kinds:

    {"kind": "force", "fx": <N>, "fy": <N>}   latest force wins within a tick
    {"kind": "set_mode", "mode": <mode>}      switch rule mid-episode, estimate kept
    {"kind": "reset", "scenario": <name>}     fresh episode, estimate back to prior
    {"kind": "pause"} / {"kind": "resume"}

Server -> client frames: "hello" (static geometry, sent once per episode),
"state" (per tick), "ack" (per handled message; notes force clamping), and
"error" (malformed message; the session continues).

Connections: ws://HOST:PORT/ws?scenario=<name>&mode=<mode>&seed=<int>&step=auto|manual
In auto mode the session ticks at a fixed rate (default 20 Hz), consuming the
latest force received since the previous tick (zero if none). In manual mode
the session advances exactly one step per force message, which makes replays
deterministic; scripted clients use it to reproduce batch episodes bit-exactly.
Stepping is the batch episode loop: a recorded force schedule replayed here
matches controller.run_episode with the same schedule.
"""

from __future__ import annotations

import asyncio
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import metrics
from .controller import MODES, EpisodeRunner
from .humans import cap_force
from .world import builtin_scenario_dir, load_scenario

DEFAULT_TICK_HZ = 20.0

_session_ids = itertools.count(1)


@dataclass
class SessionState:
    """One client's live episode plus its pending input."""

    session_id: int
    scenario_name: str
    runner: EpisodeRunner
    paused: bool = False
    manual: bool = False
    tick_hz: float = DEFAULT_TICK_HZ
    pending_force: np.ndarray = field(default_factory=lambda: np.zeros(2))
    last_u_h: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def tick(self) -> int:
        return self.runner.t


def _scenario_path(scenario_dir, name: str) -> Path:
    base = Path(scenario_dir) if scenario_dir else builtin_scenario_dir()
    path = base / f"{name.removesuffix('.json')}.json"
    if not path.exists():
        raise FileNotFoundError(f"no scenario {name!r} in {base}")
    return path


def new_session(scenario_dir, name: str, mode: str, seed: int, manual: bool) -> SessionState:
    scenario = load_scenario(_scenario_path(scenario_dir, name))
    runner = EpisodeRunner(scenario, mode, seed=seed)
    return SessionState(
        session_id=next(_session_ids),
        scenario_name=scenario.name,
        runner=runner,
        manual=manual,
    )


def hello_frame(session: SessionState) -> dict:
    sc = session.runner.scenario
    env = sc.env
    return {
        "kind": "hello",
        "session": session.session_id,
        "scenario": sc.name,
        "mode": session.runner.mode,
        "bounds": env.bounds.tolist(),
        "table_y": env.table_y,
        "obstacles": [[c.tolist(), r] for c, r in env.obstacles],
        "laptop": None if env.laptop is None else [env.laptop[0].tolist(), env.laptop[1]],
        "human_pos": None if env.human_pos is None else env.human_pos.tolist(),
        "q_start": sc.q_start.tolist(),
        "q_goal": sc.q_goal.tolist(),
        "feature_names": list(sc.feature_names),
        "theta_true": sc.theta_true.tolist(),
        "f_max": session.runner.human.f_max,
        "steps_total": session.runner.steps_total,
        "tick_hz": session.tick_hz,
    }


def broadcast_state(session: SessionState) -> dict:
    """Per-tick state frame; tick k reflects exactly k dynamics steps."""
    runner = session.runner
    log = runner.log
    iact_force, iact_time = metrics.interaction_metrics(log) if log.records else (0.0, 0.0)
    plan = runner.xi_r
    return {
        "kind": "state",
        "session": session.session_id,
        "tick": runner.t,
        "mode": runner.mode,
        "paused": session.paused,
        "done": runner.t >= runner.steps_total,
        "q": runner.x.q.tolist(),
        "qdot": runner.x.qdot.tolist(),
        "desired": runner.xi_r[
            min(runner._tracked_index(), runner.scenario.T)
        ].tolist() if plan is not None else runner.x.q.tolist(),
        "plan": plan.tolist() if plan is not None else [],
        "executed": [p.tolist() for p in runner._positions],
        "theta_hat": runner._theta_snapshot().tolist(),
        "theta_true": runner.scenario.theta_true.tolist(),
        "feature_names": list(runner.scenario.feature_names),
        "last_u_h": session.last_u_h.tolist(),
        "metrics": {"iact_force": iact_force, "iact_time": iact_time},
    }


def tick(session: SessionState) -> dict:
    """Advance one episode step with the pending force, then clear it."""
    u = session.pending_force
    session.last_u_h = u.copy()
    session.runner.step(u_h_override=u)
    session.pending_force = np.zeros(2)
    return broadcast_state(session)


def handle_message(session: SessionState, raw: str, scenario_dir=None) -> list[dict]:
    """Apply one client message; returns the frames to send back."""
    try:
        msg = json.loads(raw)
        kind = msg["kind"]
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        return [{"kind": "error", "detail": f"malformed message: {exc}"}]

    runner = session.runner
    if kind == "force":
        try:
            u = np.array([float(msg["fx"]), float(msg["fy"])])
        except (KeyError, TypeError, ValueError):
            return [{"kind": "error", "detail": "force needs numeric fx, fy"}]
        capped = cap_force(u, runner.human.f_max)
        clamped = bool(np.linalg.norm(u) > runner.human.f_max)
        session.pending_force = capped
        return [{"kind": "ack", "of": "force", "clamped": clamped}]
    if kind == "set_mode":
        mode = msg.get("mode")
        if mode not in MODES:
            return [{"kind": "error", "detail": f"unknown mode {mode!r}"}]
        try:
            _switch_mode(runner, mode)
        except ValueError as exc:
            return [{"kind": "error", "detail": str(exc)}]
        return [{"kind": "ack", "of": "set_mode", "mode": mode}]
    if kind == "reset":
        name = msg.get("scenario", session.scenario_name)
        try:
            fresh = new_session(scenario_dir, name, runner.mode, runner.seed, session.manual)
        except (FileNotFoundError, ValueError) as exc:
            return [{"kind": "error", "detail": str(exc)}]
        session.runner = fresh.runner
        session.scenario_name = fresh.scenario_name
        session.pending_force = np.zeros(2)
        session.last_u_h = np.zeros(2)
        session.paused = False
        return [{"kind": "ack", "of": "reset"}, hello_frame(session), broadcast_state(session)]
    if kind == "pause":
        session.paused = True
        return [{"kind": "ack", "of": "pause"}]
    if kind == "resume":
        session.paused = False
        return [{"kind": "ack", "of": "resume"}]
    return [{"kind": "error", "detail": f"unknown message kind {kind!r}"}]


def _switch_mode(runner: EpisodeRunner, mode: str) -> None:
    """Swap the update rule mid-episode, preserving the current estimate."""
    if mode == "qmdp" and runner.belief is None:
        raise ValueError("scenario has no belief-grid configuration for qmdp mode")
    if mode != "qmdp" and runner.xi_r is None:
        from . import planner
        from .world import straight_line

        sc = runner.scenario
        init = straight_line(sc.q_start, sc.q_goal, sc.T)
        runner.xi_r = planner.plan(runner.est.theta_hat, sc, init)
    runner.mode = mode
    runner.log.mode = mode


def create_app(scenario_dir=None) -> FastAPI:
    app = FastAPI(title="pushlearn sandbox")

    @app.websocket("/ws")
    async def ws_endpoint(
        websocket: WebSocket,
        scenario: str = "sim1_table",
        mode: str = "learn_all",
        seed: int = 0,
        step: str = "auto",
        tick_hz: float = DEFAULT_TICK_HZ,
    ):
        await websocket.accept()
        try:
            session = new_session(scenario_dir, scenario, mode, seed, manual=(step == "manual"))
        except (FileNotFoundError, ValueError) as exc:
            await websocket.send_text(json.dumps({"kind": "error", "detail": str(exc)}))
            await websocket.close()
            return
        session.tick_hz = tick_hz
        await websocket.send_text(json.dumps(hello_frame(session)))
        await websocket.send_text(json.dumps(broadcast_state(session)))
        try:
            if session.manual:
                await _manual_loop(websocket, session, scenario_dir)
            else:
                await _auto_loop(websocket, session, scenario_dir)
        except WebSocketDisconnect:
            pass

    return app


async def _manual_loop(websocket: WebSocket, session: SessionState, scenario_dir) -> None:
    """One episode step per force message; everything else is handled inline."""
    while True:
        raw = await websocket.receive_text()
        replies = handle_message(session, raw, scenario_dir)
        for frame in replies:
            await websocket.send_text(json.dumps(frame))
        was_force = any(f.get("of") == "force" for f in replies if f["kind"] == "ack")
        if was_force and not session.paused:
            await websocket.send_text(json.dumps(tick(session)))


async def _auto_loop(websocket: WebSocket, session: SessionState, scenario_dir) -> None:
    loop = asyncio.get_event_loop()
    period = 1.0 / session.tick_hz
    next_tick = loop.time() + period
    recv = asyncio.ensure_future(websocket.receive_text())
    try:
        while True:
            timeout = max(next_tick - loop.time(), 0.0)
            done, _ = await asyncio.wait({recv}, timeout=timeout)
            if recv in done:
                raw = recv.result()  # raises WebSocketDisconnect on close
                for frame in handle_message(session, raw, scenario_dir):
                    await websocket.send_text(json.dumps(frame))
                recv = asyncio.ensure_future(websocket.receive_text())
            if loop.time() >= next_tick:
                if not session.paused:
                    await websocket.send_text(json.dumps(tick(session)))
                next_tick += period
    finally:
        recv.cancel()
