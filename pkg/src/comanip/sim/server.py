"""Streaming backend: the live simulation behind the browser cockpit.

A single stepper owns the simulation state; inbound messages are queued
and applied only at tick boundaries. Outbound frames carry pose,
belief, and the latest per-mode plan at the frame rate. In real-time
mode the loop drops ticks when solves overrun; lockstep mode advances a
fixed tick count per frame for deterministic tests.
"""

from __future__ import annotations

import asyncio
import json
import time

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..geometry import Wrench
from .episode import Stepper
from .scenario import Scenario

FRAME_HZ = 30.0
MAX_CATCHUP_TICKS = 10


class Session:
    """Simulation state plus the inbound command/force mailbox."""

    def __init__(self, scenario: Scenario, engine, models):
        self.stepper = Stepper(scenario, engine, models)
        self.paused = False
        self.external: Wrench | None = None
        self.inbox: list[dict] = []
        self.dropped_ticks = 0

    def queue(self, msg: dict):
        self.inbox.append(msg)

    def apply_inbox(self):
        # latest-wins for forces; commands execute in arrival order
        for msg in self.inbox:
            if "command" in msg:
                cmd = msg["command"]
                if cmd == "reset":
                    self.stepper.reset()
                    self.external = None
                    self.paused = False
                elif cmd == "pause":
                    self.paused = not self.paused
                elif cmd == "set_mode_schedule":
                    sched = [(float(t), int(m)) for t, m in msg["schedule"]]
                    if sched:
                        self.stepper.schedule = sched
            elif "force" in msg or "moment" in msg or "hold" in msg:
                if msg.get("hold", False):
                    f = np.asarray(msg.get("force", [0, 0, 0]), dtype=float)
                    m = np.asarray(msg.get("moment", [0, 0, 0]), dtype=float)
                    self.external = Wrench(f, m)
                else:
                    self.external = None
        self.inbox.clear()

    def advance(self, n_ticks: int):
        for _ in range(n_ticks):
            if self.paused:
                break
            self.stepper.tick(override=self.external)

    def frame(self) -> dict:
        st = self.stepper
        plans = []
        if st.last_plan is not None:
            # the planned command sequence is shared across mode hypotheses
            for poses in st.last_plan["poses"]:
                plans.append({"poses": poses, "fr": st.last_plan["fr"]})
        return {
            "t": st.t,
            "pose": st.state.x.as6().tolist(),
            "velocity": st.state.xdot.tolist(),
            "belief": st.belief.b.tolist(),
            "plans": plans,
            "solver_ms": st.last_solver_ms,
            "paused": self.paused,
            "dropped_ticks": self.dropped_ticks,
        }


def create_app(
    scenario: Scenario, models, engine=None, realtime: bool = True
) -> FastAPI:
    """Build the app; session state persists across reconnects."""
    app = FastAPI()
    session = Session(scenario, engine, models)
    app.state.session = session
    base_hz = scenario.rates.base_hz
    ticks_per_frame = max(1, round(base_hz / FRAME_HZ))

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        recv_task = asyncio.ensure_future(ws.receive_text())
        anchor_wall = time.perf_counter()
        anchor_tick = session.stepper.k
        try:
            while True:
                timeout = 1.0 / FRAME_HZ if realtime else 0.0
                done, _ = await asyncio.wait({recv_task}, timeout=timeout)
                if recv_task in done:
                    try:
                        msg = json.loads(recv_task.result())
                        if isinstance(msg, dict):
                            session.queue(msg)
                    except (json.JSONDecodeError, WebSocketDisconnect):
                        pass
                    recv_task = asyncio.ensure_future(ws.receive_text())

                was_paused = session.paused
                session.apply_inbox()
                if realtime:
                    if session.paused or was_paused:
                        # re-anchor so unpausing does not fast-forward
                        anchor_wall = time.perf_counter()
                        anchor_tick = session.stepper.k
                    target = anchor_tick + int(
                        (time.perf_counter() - anchor_wall) * base_hz
                    )
                    behind = target - session.stepper.k
                    if behind > MAX_CATCHUP_TICKS:
                        session.dropped_ticks += behind - MAX_CATCHUP_TICKS
                        anchor_tick += behind - MAX_CATCHUP_TICKS
                        behind = MAX_CATCHUP_TICKS
                    if behind > 0:
                        session.advance(behind)
                else:
                    session.advance(ticks_per_frame)
                    await asyncio.sleep(0)
                await ws.send_text(json.dumps(session.frame()))
        except (WebSocketDisconnect, RuntimeError):
            pass
        finally:
            recv_task.cancel()
            # the sim keeps its synthetic source after a session drop
            session.external = None

    return app


def serve(scenario: Scenario, models, engine=None, host="127.0.0.1", port=8710):
    """Run the cockpit backend until interrupted."""
    import uvicorn

    app = create_app(scenario, models, engine)
    uvicorn.run(app, host=host, port=port, log_level="warning")
