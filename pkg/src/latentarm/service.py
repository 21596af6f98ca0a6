"""Live teleoperation session server.

Bridges a browser (or scripted client) to the simulator over a WebSocket:
JSON messages with a "type" field, one sequential event loop per session,
inputs applied at tick boundaries. With tick_ms=0 the session runs in
lockstep, advancing exactly one simulator step per axis_input message,
which makes wire-driven episodes bit-identical to direct calls of the
batch runners.
"""

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cae, perception, teleop, world

TICK_MS = 50          # default control tick; 20 frames per second
LIMIT_STEPS = teleop.DEFAULT_LIMIT
TRIALS_PER_TASK = 2
PRACTICE_POS = (0.50, 0.54)
TRIAL_POS = (0.44, 0.58)

MODE_LATENT = "latent"
MODE_EE = "ee"


class ServiceError(Exception):
    pass


def task_catalog():
    """Selectable tasks keyed by '<object>-<task name>'."""
    tasks = {}
    for name, direction in world.BASE_TASK_MAP.items():
        cid = world.CLASS_NAMES.index(name)
        tasks[f"{name}-{direction}"] = world.make_push_task(cid, direction)
    cereal = world.CLASS_NAMES.index("cereal")
    tasks["cereal-south"] = world.make_push_task(cereal, "south")
    tasks["cereal-south-east"] = world.make_push_task(cereal, "south-east")
    tasks["cereal-circle"] = world.make_circle_task(cereal)
    return tasks


DEFAULT_TASK = "cereal-south"


@dataclass
class ModelStore:
    """Checkpoints found in a models directory, keyed by strategy tag."""

    models: dict = field(default_factory=dict)
    detector: object = None

    @classmethod
    def scan(cls, models_dir):
        store = cls()
        root = Path(models_dir)
        if not root.is_dir():
            raise ServiceError(f"models directory {models_dir} not found")
        for path in sorted(root.glob("*.txt")):
            if path.name == "detector.txt":
                store.detector = perception.GridDetector.load(path)
                continue
            try:
                model = cae.load_model(path)
            except Exception:
                continue
            store.models[model.strategy] = model
        return store

    def get(self, strategy):
        if strategy not in self.models:
            raise ServiceError(f"no checkpoint for strategy {strategy!r}")
        return self.models[strategy]


def _fixed_scene(task, obj_pos):
    geom = world.ArmGeometry()
    obj = world.SceneObject(task.target_class, np.array(obj_pos, dtype=np.float64))
    return world.WorldState(np.array(world.READY_POSE, dtype=np.float64), [obj], geom)


def _msg(type_, **kw):
    kw["type"] = type_
    return kw


class Session:
    """One teleoperation session: world, mode, task, practice/trial flow.

    All mutation happens through handle() and tick(), both called from a
    single event loop, so no locking is needed.
    """

    def __init__(self, session_id, store, lockstep=False, log_path=None):
        self.id = session_id
        self.store = store
        self.lockstep = lockstep
        self.log_path = log_path
        self.tasks = task_catalog()
        # Default to latent control with the structured model; fall back to
        # any available checkpoint, then to the end-effector baseline.
        self.mode = MODE_LATENT
        if perception.STRUCTURED in store.models:
            self.strategy = perception.STRUCTURED
        elif store.models:
            self.strategy = sorted(store.models)[0]
        else:
            self.strategy = perception.STRUCTURED
            self.mode = MODE_EE
        self.task_name = DEFAULT_TASK
        self.phase = "practice"
        self.trial_index = 0
        self.axis = 0.0
        self.ee_mode = 0
        self.pending_toggle = False
        self.active = False
        self._begin_episode()

    @property
    def task(self):
        return self.tasks[self.task_name]

    # -- episode lifecycle -------------------------------------------------

    def _begin_episode(self):
        pos = TRIAL_POS if self.phase == "trial" else PRACTICE_POS
        self.world = _fixed_scene(self.task, pos)
        self.plan = teleop.plan_for_task(self.world, self.task)
        self.history = [self.world.copy()]
        self.axis = 0.0
        self.ee_mode = 0
        self.pending_toggle = False
        self.started = time.monotonic()
        self.s0 = None
        if self.mode == MODE_LATENT:
            model = self.store.get(self.strategy)
            ctx = teleop.make_episode_context(
                self.strategy, self.world, self.task, detector=self.store.detector
            )
            self.s0 = teleop._fuse_initial(model, self.world, ctx)
        self.active = True

    def result(self):
        """EpisodeResult for the most recent episode (matches batch runners)."""
        success = world.task_success(self.history, self.task)
        err = float(np.linalg.norm(world.angdiff(self.plan.final, self.history[-1].q)))
        controller = "latent-manual" if self.mode == MODE_LATENT else "ee-baseline"
        return teleop.EpisodeResult(self.history, success, err,
                                    len(self.history) - 1, controller)

    def _finish_episode(self):
        self.active = False
        res = self.result()
        out = [_msg("episode_end", success=res.success,
                    final_state_error=res.final_state_error, steps=res.steps)]
        if self.phase == "trial":
            self._log_trial(res)
            self.trial_index += 1
            if self.trial_index < TRIALS_PER_TASK:
                self._begin_episode()
            else:
                self.phase = "done"
        return out

    def _log_trial(self, res):
        record = {
            "session": self.id,
            "mode": self.mode,
            "task": self.task_name,
            "success": bool(res.success),
            "final_state_error": res.final_state_error,
            "steps": res.steps,
            "wall_ms": int((time.monotonic() - self.started) * 1000),
        }
        if self.log_path:
            with open(self.log_path, "a") as fh:
                fh.write(json.dumps(record) + "\n")

    # -- stepping ----------------------------------------------------------

    def _advance(self, axis):
        if self.mode == MODE_LATENT:
            model = self.store.get(self.strategy)
            self.world = teleop.latent_step(self.world, model, self.s0, axis)
        else:
            if self.pending_toggle:
                self.ee_mode = 1 - self.ee_mode
                self.pending_toggle = False
            self.world, _ = teleop.ee_step(self.world, axis, self.ee_mode)
        self.history.append(self.world.copy())
        out = [self.frame()]
        done = (self.world.failed_exit
                or world.task_success(self.history, self.task)
                or len(self.history) - 1 >= LIMIT_STEPS)
        if done:
            out.extend(self._finish_episode())
        return out

    def tick(self):
        """Timer tick: apply the held axis value and emit a frame."""
        if not self.active:
            return []
        return self._advance(self.axis)

    def frame(self):
        ee = world.fk(self.world.q, self.world.geometry)
        return _msg(
            "state_frame",
            joints=[float(v) for v in self.world.q],
            ee_xy=[float(ee[0]), float(ee[1])],
            objects=[
                {
                    "name": world.CLASS_NAMES[o.class_id],
                    "x": float(o.pos[0]),
                    "y": float(o.pos[1]),
                    "radius": float(o.radius),
                }
                for o in self.world.objects
            ],
            step=len(self.history) - 1,
            phase=self._phase_tag(),
        )

    def _phase_tag(self):
        if self.phase == "trial":
            return f"trial-{self.trial_index + 1}"
        return self.phase

    def ack(self):
        geom = self.world.geometry
        return _msg(
            "session_ack",
            session=self.id,
            links=list(geom.links),
            base=list(geom.base),
            tick_ms=0 if self.lockstep else TICK_MS,
            mode=self.mode,
            strategy=self.strategy,
            task=self.task_name,
            tasks=sorted(self.tasks),
            phase=self._phase_tag(),
            limit_steps=LIMIT_STEPS,
            ee_mode_axes=["x", "y"],
        )

    # -- message handling ----------------------------------------------------

    def handle(self, msg):
        """Apply one client message; returns server messages to send."""
        kind = msg.get("type")
        if kind == "hello":
            return [self.ack()]
        if kind == "select_mode":
            mode = msg.get("mode")
            if mode not in (MODE_LATENT, MODE_EE):
                return [_msg("error", message=f"unknown mode {mode!r}")]
            strategy = msg.get("strategy", self.strategy)
            if mode == MODE_LATENT:
                try:
                    self.store.get(strategy)
                except ServiceError as e:
                    return [_msg("error", message=str(e))]
            self.mode, self.strategy = mode, strategy
            self.phase, self.trial_index = "practice", 0
            self._begin_episode()
            return [self.ack(), self.frame()]
        if kind == "select_task":
            name = msg.get("task")
            if name not in self.tasks:
                return [_msg("error", message=f"unknown task {name!r}")]
            self.task_name = name
            self.phase, self.trial_index = "practice", 0
            self._begin_episode()
            return [self.ack(), self.frame()]
        if kind == "axis_input":
            if not self.active:
                return [_msg("error", message="episode over; reset to continue",
                             warning=True)]
            value = float(np.clip(float(msg.get("value", 0.0)), -1.0, 1.0))
            if self.lockstep:
                return self._advance(value)
            self.axis = value
            return []
        if kind == "mode_toggle":
            if self.mode != MODE_EE:
                return [_msg("error", message="mode_toggle only applies to ee mode",
                             warning=True)]
            self.pending_toggle = not self.pending_toggle
            return []
        if kind == "reset_practice":
            self.phase, self.trial_index = "practice", 0
            self._begin_episode()
            return [self.ack(), self.frame()]
        if kind == "begin_trials":
            self.phase, self.trial_index = "trial", 0
            self._begin_episode()
            return [self.ack(), self.frame()]
        if kind == "quit":
            self.active = False
            return []
        return [_msg("error", message=f"unknown message type {kind!r}")]


def build_app(store, tick_ms=TICK_MS, log_path=None):
    """FastAPI application exposing the session WebSocket at /ws."""
    from fastapi import FastAPI, WebSocket, WebSocketDisconnect

    app = FastAPI(title="latentarm teleop service")
    counter = {"n": 0}

    @app.get("/health")
    def health():
        return {"ok": True, "strategies": sorted(store.models)}

    @app.websocket("/ws")
    async def ws_endpoint(websocket: WebSocket):
        await websocket.accept()
        counter["n"] += 1
        session = Session(f"s{counter['n']:04d}", store,
                          lockstep=(tick_ms == 0), log_path=log_path)
        queue = asyncio.Queue()

        async def sender(messages):
            for m in messages:
                await websocket.send_text(json.dumps(m))

        async def ticker():
            while True:
                await asyncio.sleep(tick_ms / 1000.0)
                while not queue.empty():
                    await sender(session.handle(queue.get_nowait()))
                await sender(session.tick())

        tick_task = None
        if tick_ms > 0:
            tick_task = asyncio.create_task(ticker())
        try:
            while True:
                raw = await websocket.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError:
                    await sender([_msg("error", message="malformed message")])
                    continue
                if tick_ms > 0:
                    if msg.get("type") == "quit":
                        break
                    queue.put_nowait(msg)
                else:
                    if msg.get("type") == "quit":
                        break
                    await sender(session.handle(msg))
        except WebSocketDisconnect:
            pass
        finally:
            if tick_task is not None:
                tick_task.cancel()

    return app


def serve(models_dir, port=8710, tick_ms=TICK_MS, log_path=None, host="127.0.0.1"):
    """Blocking entry point used by the CLI."""
    import uvicorn

    store = ModelStore.scan(models_dir)
    app = build_app(store, tick_ms=tick_ms, log_path=log_path)
    uvicorn.run(app, host=host, port=port, log_level="warning")
