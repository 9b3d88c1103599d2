"""HTTP session service for live expert-driven optimisation runs.

One JSON document per session under the data directory; every mutation is
persisted before it is acknowledged, so a restarted service resumes each
session with the identical pending choice set. Proposal computation (GP fit
plus the evolutionary solve) runs on a worker thread while the session
reports `running_proposal`; clients poll.

Two modes: `demo` attaches a synthetic objective and auto-evaluates the
chosen points; `external` hands the chosen point back to the caller and
waits for the measured outcome.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import replace
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import parse_qs, urlparse

import numpy as np

from .benchmark import FunctionSpec, build_function
from .gp import Bounds, posterior_batch
from .loop import (
    ChoiceSet,
    LoopConfig,
    LoopState,
    _choice_set_from_doc,
    _choice_set_to_doc,
    apply_selection,
    config_from_doc,
    config_to_doc,
    initial_design,
    initial_state,
    propose_choices,
    state_from_doc,
    state_to_doc,
)

SESSION_SCHEMA_VERSION = 1


class SessionStatus(str, Enum):
    AWAITING_SELECTION = "awaiting_selection"
    AWAITING_OBSERVATION = "awaiting_observation"
    RUNNING_PROPOSAL = "running_proposal"
    FINISHED = "finished"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


def _validation(msg: str) -> ApiError:
    return ApiError(400, "validation", msg)


def _conflict(msg: str) -> ApiError:
    return ApiError(409, "conflict", msg)


def _not_found(msg: str) -> ApiError:
    return ApiError(404, "not_found", msg)


class Session:
    """Single optimisation session; all mutation happens under `lock`."""

    def __init__(self, sid: str, mode: str, config: LoopConfig,
                 function_spec: Optional[FunctionSpec]):
        self.id = sid
        self.mode = mode
        self.config = config
        self.function_spec = function_spec
        self.lock = threading.Lock()
        self.status = SessionStatus.RUNNING_PROPOSAL
        self.state: Optional[LoopState] = None
        self.init_queue: list = []  # points awaiting external observation
        self.observed_init: list = []  # (point, y) accepted so far
        self.pending_point: Optional[np.ndarray] = None  # selected, unobserved
        self.pending_choices: Optional[ChoiceSet] = None
        self.selection_index: int = 0  # index behind pending_point
        self.selection_override: Optional[np.ndarray] = None
        self.error: Optional[str] = None
        self.created = time.time()
        self.updated = self.created
        self.worker: Optional[threading.Thread] = None

    # -- helpers -----------------------------------------------------------

    @property
    def objective(self):
        if self.function_spec is None:
            return None
        return build_function(self.function_spec)

    def touch(self):
        self.updated = time.time()

    def evaluations(self) -> int:
        if self.state is not None:
            return len(self.state.dataset)
        return len(self.observed_init)

    def summary(self) -> Optional[dict]:
        if self.status is not SessionStatus.FINISHED or self.state is None:
            return None
        values = self.state.dataset.values
        best = int(np.argmax(values))
        out = {
            "best_point": self.state.dataset.points[best].tolist(),
            "best_value": float(values[best]),
            "evaluations": int(values.size),
        }
        fn = self.objective
        if fn is not None and fn.true_max is not None:
            from .benchmark import regret

            trace = regret(values, max(fn.true_max, float(values.max())))
            out["simple_regret"] = trace.simple_regret.tolist()
            out["average_regret"] = trace.average_regret.tolist()
        return out

    # -- persistence -------------------------------------------------------

    def to_doc(self) -> dict:
        doc = {
            "schema_version": SESSION_SCHEMA_VERSION,
            "id": self.id,
            "mode": self.mode,
            "status": self.status.value,
            "config": config_to_doc(self.config),
            "function_spec": None if self.function_spec is None
            else vars(self.function_spec).copy(),
            "init_queue": [p.tolist() for p in self.init_queue],
            "observed_init": [[p.tolist(), y] for p, y in self.observed_init],
            "pending_point": None if self.pending_point is None
            else self.pending_point.tolist(),
            "selection_index": self.selection_index,
            "selection_override": None if self.selection_override is None
            else self.selection_override.tolist(),
            "pending_choices": None if self.pending_choices is None
            else _choice_set_to_doc(self.pending_choices),
            "state": None if self.state is None else state_to_doc(self.state),
            "error": self.error,
            "created": self.created,
            "updated": self.updated,
        }
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "Session":
        if doc.get("schema_version") != SESSION_SCHEMA_VERSION:
            raise ValueError("unsupported session schema version")
        config = config_from_doc(doc["config"])
        spec = None
        if doc.get("function_spec"):
            spec = FunctionSpec(**doc["function_spec"])
        session = cls(doc["id"], doc["mode"], config, spec)
        session.status = SessionStatus(doc["status"])
        session.init_queue = [np.array(p, dtype=float) for p in doc["init_queue"]]
        session.observed_init = [
            (np.array(p, dtype=float), float(y)) for p, y in doc["observed_init"]
        ]
        if doc.get("pending_point") is not None:
            session.pending_point = np.array(doc["pending_point"], dtype=float)
        session.selection_index = int(doc.get("selection_index", 0))
        if doc.get("selection_override") is not None:
            session.selection_override = np.array(doc["selection_override"], dtype=float)
        if doc.get("pending_choices") is not None:
            session.pending_choices = _choice_set_from_doc(doc["pending_choices"])
        if doc.get("state") is not None:
            session.state = state_from_doc(doc["state"])
            if session.pending_choices is not None:
                session.state = LoopState(
                    dataset=session.state.dataset, model=session.state.model,
                    history=session.state.history, config=session.state.config,
                    pending=session.pending_choices,
                )
        session.error = doc.get("error")
        session.created = doc.get("created", time.time())
        session.updated = doc.get("updated", session.created)
        return session


class SessionManager:
    def __init__(self, data_dir: str, master_seed: int = 0):
        self.data_dir = data_dir
        self.master_seed = master_seed
        os.makedirs(data_dir, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._sessions: dict[str, Session] = {}
        self._load_existing()

    # -- persistence -------------------------------------------------------

    def _path(self, sid: str) -> str:
        return os.path.join(self.data_dir, f"{sid}.json")

    def persist(self, session: Session) -> None:
        doc = session.to_doc()
        tmp = self._path(session.id) + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(doc, fh)
        os.replace(tmp, self._path(session.id))

    def _load_existing(self) -> None:
        for name in sorted(os.listdir(self.data_dir)):
            if not name.endswith(".json"):
                continue
            try:
                with open(os.path.join(self.data_dir, name)) as fh:
                    session = Session.from_doc(json.load(fh))
            except Exception:
                continue
            self._sessions[session.id] = session
            # resume proposals that were cut off mid-computation
            if session.status is SessionStatus.RUNNING_PROPOSAL:
                self._start_proposal(session)

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, payload: dict) -> Session:
        mode = payload.get("mode", "demo")
        if mode not in ("demo", "external"):
            raise _validation(f"mode must be demo or external, got {mode!r}")

        spec = None
        if payload.get("function") is not None:
            fdoc = dict(payload["function"])
            kind = fdoc.pop("kind", "standard")
            try:
                spec = FunctionSpec(kind=kind, **fdoc)
                fn = build_function(spec)
            except (TypeError, ValueError) as exc:
                raise _validation(f"bad function spec: {exc}")
        elif mode == "demo":
            raise _validation("demo mode needs a function spec")

        try:
            bounds = self._bounds_from(payload, spec)
            config = self._config_from(payload, bounds)
        except (TypeError, ValueError) as exc:
            raise _validation(str(exc))

        sid = uuid.uuid4().hex[:12]
        session = Session(sid, mode, config, spec)
        with self._registry_lock:
            self._sessions[sid] = session

        design = initial_design(config)
        if mode == "external":
            session.init_queue = [np.array(p) for p in design]
            session.status = SessionStatus.AWAITING_OBSERVATION
            self.persist(session)
            return session

        fn = build_function(spec)
        values = [float(fn.evaluate(p)) for p in design]
        session.state = initial_state(config, values, points=design)
        session.status = SessionStatus.RUNNING_PROPOSAL
        self.persist(session)
        self._start_proposal(session)
        return session

    @staticmethod
    def _bounds_from(payload: dict, spec: Optional[FunctionSpec]) -> Bounds:
        if payload.get("bounds") is not None:
            b = payload["bounds"]
            return Bounds(b["lower"], b["upper"])
        if spec is not None:
            return build_function(spec).bounds
        raise ValueError("bounds are required without a function spec")

    def _config_from(self, payload: dict, bounds: Bounds) -> LoopConfig:
        from .acquisition import AcquisitionConfig, UtilityConfig
        from .gp import FitConfig
        from .nsga2 import Nsga2Config

        def sub(cls, key):
            return cls(**payload.get(key, {}))

        return LoopConfig(
            bounds=bounds,
            p=int(payload.get("p", 4)),
            init_points=int(payload.get("init_points", 4)),
            max_evaluations=int(payload.get("budget", 20)),
            seed=int(payload.get("seed", self.master_seed)),
            utility=sub(UtilityConfig, "utility"),
            fit=sub(FitConfig, "fit"),
            acquisition=sub(AcquisitionConfig, "acquisition"),
            nsga2=sub(Nsga2Config, "nsga2"),
        )

    def get(self, sid: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(sid)
        if session is None:
            raise _not_found(f"no session {sid!r}")
        return session

    # -- proposal worker -----------------------------------------------------

    def _start_proposal(self, session: Session) -> None:
        def work():
            try:
                choice_set = propose_choices(session.state)
            except Exception as exc:
                with session.lock:
                    session.error = f"{type(exc).__name__}: {exc}"
                    session.status = SessionStatus.FINISHED
                    session.touch()
                    self.persist(session)
                return
            with session.lock:
                session.pending_choices = choice_set
                session.state = LoopState(
                    dataset=session.state.dataset, model=session.state.model,
                    history=session.state.history, config=session.state.config,
                    pending=choice_set,
                )
                session.status = SessionStatus.AWAITING_SELECTION
                session.touch()
                self.persist(session)

        session.worker = threading.Thread(target=work, daemon=True)
        session.worker.start()

    def _advance_after_observation(self, session: Session) -> None:
        """With the dataset updated, either propose again or finish."""
        if len(session.state.dataset) >= session.config.max_evaluations:
            session.status = SessionStatus.FINISHED
            session.touch()
            self.persist(session)
            return
        session.status = SessionStatus.RUNNING_PROPOSAL
        session.touch()
        self.persist(session)
        self._start_proposal(session)

    # -- request operations ---------------------------------------------------

    def session_view(self, session: Session) -> dict:
        with session.lock:
            doc = {
                "id": session.id,
                "mode": session.mode,
                "status": session.status.value,
                "evaluations": session.evaluations(),
                "budget": session.config.max_evaluations,
                "p": session.config.p,
                "dimension": session.config.bounds.dimension,
                "bounds": {
                    "lower": session.config.bounds.lower.tolist(),
                    "upper": session.config.bounds.upper.tolist(),
                },
                "created": session.created,
                "updated": session.updated,
                "error": session.error,
            }
            if session.mode == "external" and session.init_queue:
                doc["required_observations"] = [p.tolist() for p in session.init_queue]
                doc["next_point"] = session.init_queue[0].tolist()
            if session.pending_point is not None:
                doc["next_point"] = session.pending_point.tolist()
            summary = session.summary()
            if summary is not None:
                doc["summary"] = summary
            return doc

    def choices_view(self, session: Session) -> dict:
        with session.lock:
            if session.status is not SessionStatus.AWAITING_SELECTION:
                raise _conflict(
                    f"choices unavailable while status is {session.status.value}"
                )
            cs = session.pending_choices
            doc = {
                "id": session.id,
                "iteration": cs.iteration,
                "choices": _choice_set_to_doc(cs)["choices"],
                "pareto_summary": _choice_set_to_doc(cs).get("pareto_summary"),
                "history": self._history_rows(session),
            }
            if session.config.bounds.dimension <= 2:
                doc["posterior"] = self._posterior_rows(session, 201)
            return doc

    def _history_rows(self, session: Session) -> list:
        rows = []
        state = session.state
        if state is None:
            for p, y in session.observed_init:
                rows.append({"point": p.tolist(), "value": y, "source": "initial"})
            return rows
        n_init = session.config.n_initial
        for i in range(len(state.dataset)):
            rows.append({
                "point": state.dataset.points[i].tolist(),
                "value": float(state.dataset.values[i]),
                "source": "initial" if i < n_init else "selected",
            })
        return rows

    def _posterior_rows(self, session: Session, grid: int) -> list:
        state = session.state
        if state is None:
            return []
        bounds = session.config.bounds
        dim = bounds.dimension
        if dim == 1:
            X = np.linspace(bounds.lower[0], bounds.upper[0], grid)[:, None]
        elif dim == 2:
            side = max(2, int(np.sqrt(grid)))
            g0 = np.linspace(bounds.lower[0], bounds.upper[0], side)
            g1 = np.linspace(bounds.lower[1], bounds.upper[1], side)
            X = np.stack(np.meshgrid(g0, g1, indexing="ij"), -1).reshape(-1, 2)
        else:
            raise _validation("posterior grid only supported for 1-d and 2-d")
        mean, std = posterior_batch(state.model, X)
        beta = session.config.utility.beta
        return [
            {
                "x": X[i].tolist(),
                "mean": float(mean[i]),
                "std": float(std[i]),
                "utility": float(mean[i] + beta * std[i]),
            }
            for i in range(X.shape[0])
        ]

    def posterior_view(self, session: Session, grid: int) -> dict:
        with session.lock:
            if session.state is None:
                raise _conflict("posterior unavailable before initial observations")
            return {"id": session.id, "grid": self._posterior_rows(session, grid)}

    def history_view(self, session: Session) -> dict:
        with session.lock:
            rows = self._history_rows(session)
            selections = []
            if session.state is not None:
                for rec in session.state.history:
                    selections.append({
                        "iteration": rec.choice_set.iteration,
                        "selected_index": rec.selected_index,
                        "observed_y": rec.observed_y,
                        "choices": _choice_set_to_doc(rec.choice_set)["choices"],
                    })
            return {"id": session.id, "evaluations": rows, "selections": selections}

    def submit_selection(self, session: Session, payload: dict) -> dict:
        with session.lock:
            if session.status is not SessionStatus.AWAITING_SELECTION:
                raise _conflict(
                    f"cannot select while status is {session.status.value}"
                )
            cs = session.pending_choices
            override = payload.get("point")
            if override is not None:
                point = np.asarray(override, dtype=float).ravel()
                if point.size != session.config.bounds.dimension:
                    raise _validation("override point has wrong dimension")
                if not session.config.bounds.contains(point):
                    raise _validation("override point outside bounds")
                index = int(payload.get("index", 0))
            else:
                if "index" not in payload:
                    raise _validation("selection needs an index")
                index = payload["index"]
                if not isinstance(index, int) or not 0 <= index < cs.p:
                    raise _validation(f"index must be an integer in [0, {cs.p})")
                point = cs.choices[index].point

            if session.mode == "external":
                session.pending_point = point
                session.selection_index = index
                session.selection_override = None if override is None else point
                session.status = SessionStatus.AWAITING_OBSERVATION
                session.touch()
                self.persist(session)
                return {
                    "id": session.id,
                    "status": session.status.value,
                    "point": point.tolist(),
                    "iteration": cs.iteration,
                }

            fn = session.objective
            y = float(fn.evaluate(point))
            session.state = apply_selection(
                session.state, index, y,
                point_override=None if override is None else point,
            )
            session.pending_choices = None
            ack = {
                "id": session.id,
                "point": point.tolist(),
                "observed_y": y,
                "iteration": cs.iteration,
                "evaluations": len(session.state.dataset),
            }
            self._advance_after_observation(session)
            ack["status"] = session.status.value
            return ack

    def submit_observation(self, session: Session, payload: dict) -> dict:
        with session.lock:
            if session.status is not SessionStatus.AWAITING_OBSERVATION:
                raise _conflict(
                    f"cannot observe while status is {session.status.value}"
                )
            if "y" not in payload:
                raise _validation("observation needs y")
            try:
                y = float(payload["y"])
            except (TypeError, ValueError):
                raise _validation("y must be a number")
            if not np.isfinite(y):
                raise _validation("y must be finite")

            if session.init_queue:  # still collecting the initial design
                point = session.init_queue.pop(0)
                session.observed_init.append((point, y))
                if session.init_queue:
                    session.touch()
                    self.persist(session)
                    return {
                        "id": session.id,
                        "status": session.status.value,
                        "remaining_initial": len(session.init_queue),
                        "next_point": session.init_queue[0].tolist(),
                    }
                points = np.array([p for p, _ in session.observed_init])
                values = [v for _, v in session.observed_init]
                session.state = initial_state(session.config, values, points=points)
                self._advance_after_observation(session)
                return {"id": session.id, "status": session.status.value}

            if session.pending_point is None:
                raise _conflict("no selection awaiting an observation")
            session.state = apply_selection(
                session.state, session.selection_index, y,
                point_override=session.selection_override,
            )
            session.pending_choices = None
            session.pending_point = None
            session.selection_override = None
            self._advance_after_observation(session)
            return {"id": session.id, "status": session.status.value}


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/sessions$"), "create"),
    ("GET", re.compile(r"^/sessions/(?P<sid>\w+)$"), "session"),
    ("GET", re.compile(r"^/sessions/(?P<sid>\w+)/choices$"), "choices"),
    ("POST", re.compile(r"^/sessions/(?P<sid>\w+)/selection$"), "selection"),
    ("POST", re.compile(r"^/sessions/(?P<sid>\w+)/observation$"), "observation"),
    ("GET", re.compile(r"^/sessions/(?P<sid>\w+)/history$"), "history"),
    ("GET", re.compile(r"^/sessions/(?P<sid>\w+)/posterior$"), "posterior"),
]


class _Handler(BaseHTTPRequestHandler):
    manager: SessionManager = None  # set by make_server

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _dispatch(self, method: str) -> None:
        parsed = urlparse(self.path)
        path_matched = False
        for want, pattern, action in _ROUTES:
            match = pattern.match(parsed.path)
            if not match:
                continue
            path_matched = True
            if want != method:
                continue
            try:
                self._handle(action, match.groupdict(), parsed)
            except ApiError as err:
                self._send(err.status, {"code": err.code, "message": err.message})
            except Exception as exc:  # defensive: surface as 500
                self._send(500, {"code": "internal", "message": str(exc)})
            return
        if method == "OPTIONS":
            self._send(204, {})
        elif path_matched:
            self._send(405, {"code": "method_not_allowed",
                             "message": f"{method} not allowed on {parsed.path}"})
        else:
            self._send(404, {"code": "not_found",
                             "message": f"no route {parsed.path}"})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return {}
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw.decode())
        except json.JSONDecodeError:
            raise _validation("request body must be JSON")
        if not isinstance(doc, dict):
            raise _validation("request body must be a JSON object")
        return doc

    def _handle(self, action: str, params: dict, parsed) -> None:
        mgr = self.manager
        if action == "create":
            session = mgr.create_session(self._body())
            self._send(201, mgr.session_view(session))
            return
        session = mgr.get(params["sid"])
        if action == "session":
            self._send(200, mgr.session_view(session))
        elif action == "choices":
            self._send(200, mgr.choices_view(session))
        elif action == "selection":
            self._send(200, mgr.submit_selection(session, self._body()))
        elif action == "observation":
            self._send(200, mgr.submit_observation(session, self._body()))
        elif action == "history":
            self._send(200, mgr.history_view(session))
        elif action == "posterior":
            query = parse_qs(parsed.query)
            grid = int(query.get("grid", ["201"])[0])
            if not 2 <= grid <= 40_401:
                raise _validation("grid must lie in [2, 40401]")
            self._send(200, mgr.posterior_view(session, grid))

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self._dispatch("OPTIONS")


def make_server(data_dir: str, port: int = 0, master_seed: int = 0,
                host: str = "127.0.0.1"):
    """Build (server, manager); `server.serve_forever()` runs it."""
    manager = SessionManager(data_dir, master_seed)
    handler = type("BoundHandler", (_Handler,), {"manager": manager})
    server = ThreadingHTTPServer((host, port), handler)
    return server, manager


def serve(data_dir: str, port: int, master_seed: int = 0,
          host: str = "127.0.0.1") -> None:
    import signal

    server, _ = make_server(data_dir, port, master_seed, host)

    def shutdown(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, shutdown)
    print(f"session service on http://{host}:{server.server_address[1]} "
          f"(data: {data_dir})", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
