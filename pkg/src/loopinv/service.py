"""Interactive strategy sessions for the explorer UI and external tools.

A session wraps a strategy execution plus its snapshot history.  The
request handler is transport-agnostic (a dict in, a dict out) so tests
drive it directly; `serve` exposes it over local HTTP together with the
static explorer bundle, and `stdio_main` speaks line-delimited JSON on
stdin/stdout.

Payloads ship every formula and program both pre-rendered as text and as
a small structured tree, so clients never parse anything.
"""

from __future__ import annotations

import itertools
import json
import random
import threading
from dataclasses import dataclass, field
from typing import Optional

from .engine import (
    ExecutionState, combine_value, resume, start,
)
from .formulas import Formula
from .mcts import UniformEvaluator, mcts_decide
from .parser import print_task, render_formula
from .programs import LoopTask
from .parser import parse_task
from .solver import make_solver
from .teacher import make_teacher, sample_constraints

PROTOCOL_VERSION = "1"
DEFAULT_MCTS_SIMS = 64


class ApiError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    kind: str
    history: list[ExecutionState]
    stats: Optional[tuple] = None      # per-choice stats of the last search
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def state(self) -> ExecutionState:
        return self.history[-1]


def _render_value(value) -> dict:
    if isinstance(value, LoopTask):
        return {"kind": "program", "text": print_task(value)}
    if isinstance(value, tuple) and value and isinstance(value[0], tuple) \
            and len(value[0]) == 3 and isinstance(value[0][2], str):
        # pending entries: (kind, formula, status)
        return {"kind": "pending", "items": [
            {"kind": k, "formula": render_formula(f), "status": s}
            for k, f, s in value]}
    if isinstance(value, tuple) and value and isinstance(value[0], tuple) \
            and len(value[0]) == 2 and isinstance(value[0][0], str):
        return {"kind": "record", "items": [
            {"name": k, "value": _plain(v)} for k, v in value]}
    if isinstance(value, tuple):
        return {"kind": "formulas",
                "items": [render_formula(f) for f in value]}
    if hasattr(value, "rel") or value.__class__.__name__ in (
            "TrueF", "FalseF", "Not", "And", "Or", "Implies"):
        return {"kind": "formula", "text": render_formula(value)}
    return {"kind": "text", "text": str(value)}


def _plain(v):
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


def probe_document(session: Session) -> dict:
    st = session.state
    cfg = st.strategy.config
    doc = {
        "protocol_version": PROTOCOL_VERSION,
        "session_id": session.id,
        "kind": session.kind,
        "status": st.status,
        "trace": list(st.trace),
        "history_len": len(session.history),
        "can_undo": len(session.history) > 1,
        "event_counts": dict(st.event_counts),
        "reward": st.reward,
        "result": None,
        "probe": None,
        "choices": None,
        "value_estimate": None,
        "event_probs": None,
        "heuristic": "uniform",
    }
    if st.status == "succeeded":
        res = st.result
        if hasattr(res, "conjuncts"):
            doc["result"] = {
                "invariant": " && ".join(render_formula(c)
                                         for c in res.conjuncts) or "true",
                "conjuncts": [render_formula(c) for c in res.conjuncts],
            }
        elif hasattr(res, "task"):
            doc["result"] = {
                "task_text": print_task(res.task, res.render),
                "violations": sorted(res.violations),
            }
        else:
            doc["result"] = {"value": _plain(res)}
    if not st.running:
        return doc

    cp = st.choice_point
    evaluator = UniformEvaluator()
    priors, pred = evaluator.evaluate(cp, cfg)
    doc["probe"] = {
        "strategy": cp.probe.strategy,
        "site": cp.probe.site,
        "sections": [dict(name=name, **_render_value(value))
                     for name, value in cp.probe.sections],
    }
    stats = {s.index: s for s in (session.stats or ())}
    doc["choices"] = [
        {
            "index": i,
            "label": ch.label,
            "prior": priors[i],
            "visits": stats[i].visits if i in stats else None,
            "q": stats[i].q if i in stats else None,
        }
        for i, ch in enumerate(cp.choices)
    ]
    doc["value_estimate"] = combine_value(pred, st.event_counts, cfg)
    doc["event_probs"] = [
        {
            "id": e.id,
            "reward": e.reward,
            "max_count": e.max_count,
            "count": st.event_counts.get(e.id, 0),
            "dist": list(pred.dist_for(e.id) or ()),
        }
        for e in cfg.events
    ]
    return doc


class SessionManager:
    def __init__(self):
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)

    def _get(self, sid: str) -> Session:
        with self._lock:
            s = self._sessions.get(sid)
        if s is None:
            raise ApiError(404, f"unknown session {sid!r}")
        return s

    def new_session(self, kind: str, task_text: Optional[str] = None,
                    seed: Optional[int] = None) -> Session:
        if kind == "solver":
            if not task_text:
                raise ApiError(400, "solver session needs task_text")
            try:
                task = parse_task(task_text)
            except Exception as exc:
                raise ApiError(400, f"parse error: {exc}")
            st = start(make_solver(task))
        elif kind == "teacher":
            cs = sample_constraints(random.Random(seed or 0))
            st = start(make_teacher(cs))
        else:
            raise ApiError(400, f"unknown session kind {kind!r}")
        with self._lock:
            sid = f"s{next(self._ids)}"
            session = Session(sid, kind, [st])
            self._sessions[sid] = session
        return session

    def close(self, sid: str):
        with self._lock:
            if sid not in self._sessions:
                raise ApiError(404, f"unknown session {sid!r}")
            del self._sessions[sid]

    # -- operations ---------------------------------------------------------
    def get_state(self, sid: str) -> dict:
        s = self._get(sid)
        with s.lock:
            return probe_document(s)

    def choose(self, sid: str, index: int) -> dict:
        s = self._get(sid)
        with s.lock:
            st = s.state
            if not st.running:
                raise ApiError(409, "session is terminal")
            if not isinstance(index, int) or not (
                    0 <= index < len(st.choice_point.choices)):
                raise ApiError(400, f"choice index {index} out of range")
            s.history.append(resume(st.clone(), index))
            s.stats = None
            return probe_document(s)

    def run_mcts(self, sid: str, sims: int = DEFAULT_MCTS_SIMS) -> dict:
        s = self._get(sid)
        with s.lock:
            st = s.state
            if not st.running:
                raise ApiError(409, "session is terminal")
            if sims < 1 or sims > 100_000:
                raise ApiError(400, "sims out of range")
            _best, stats = mcts_decide(st.clone(), sims)
            s.stats = stats
            return probe_document(s)

    def step_best(self, sid: str, sims: int = DEFAULT_MCTS_SIMS) -> dict:
        s = self._get(sid)
        with s.lock:
            st = s.state
            if not st.running:
                raise ApiError(409, "session is terminal")
            if s.stats is None:
                _best, stats = mcts_decide(st.clone(), sims)
                s.stats = stats
            best = max(s.stats, key=lambda c: (c.visits, -c.index)).index
            s.history.append(resume(st.clone(), best))
            s.stats = None
            return probe_document(s)

    def undo(self, sid: str) -> dict:
        s = self._get(sid)
        with s.lock:
            if len(s.history) <= 1:
                raise ApiError(409, "nothing to undo")
            s.history.pop()
            s.stats = None
            return probe_document(s)


def handle(manager: SessionManager, request: dict) -> dict:
    """Transport-agnostic request dispatch."""
    try:
        op = request.get("op")
        if op == "new_session":
            s = manager.new_session(request.get("kind", "solver"),
                                    request.get("task_text"),
                                    request.get("seed"))
            return probe_document(s)
        sid = request.get("session_id")
        if op == "get_state":
            return manager.get_state(sid)
        if op == "choose":
            return manager.choose(sid, request.get("index"))
        if op == "run_mcts":
            return manager.run_mcts(sid, request.get("sims",
                                                     DEFAULT_MCTS_SIMS))
        if op == "step_best":
            return manager.step_best(sid, request.get("sims",
                                                      DEFAULT_MCTS_SIMS))
        if op == "undo":
            return manager.undo(sid)
        if op == "close":
            manager.close(sid)
            return {"ok": True}
        raise ApiError(400, f"unknown op {op!r}")
    except ApiError as exc:
        return {"error": {"code": exc.code, "message": exc.message}}


# ---------------------------------------------------------------------------
# HTTP transport plus static explorer assets

def serve(port: int = 8731, manager: Optional[SessionManager] = None,
          block: bool = True):
    import http.server
    import pathlib
    import re

    manager = manager or SessionManager()
    static_root = pathlib.Path(__file__).resolve().parents[2] / "frontend" / "dist"

    routes = [
        (re.compile(r"^/session$"), "POST", "new"),
        (re.compile(r"^/session/([^/]+)/state$"), "GET", "state"),
        (re.compile(r"^/session/([^/]+)/choose$"), "POST", "choose"),
        (re.compile(r"^/session/([^/]+)/mcts$"), "POST", "mcts"),
        (re.compile(r"^/session/([^/]+)/step$"), "POST", "step"),
        (re.compile(r"^/session/([^/]+)/undo$"), "POST", "undo"),
        (re.compile(r"^/session/([^/]+)$"), "DELETE", "close"),
    ]

    class Handler(http.server.BaseHTTPRequestHandler):
        def log_message(self, *a):
            pass

        def _json(self, payload, code=200):
            body = json.dumps(payload).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            n = int(self.headers.get("Content-Length") or 0)
            if not n:
                return {}
            try:
                return json.loads(self.rfile.read(n))
            except json.JSONDecodeError:
                return {}

        def _dispatch(self, method):
            for pattern, meth, name in routes:
                m = pattern.match(self.path)
                if m and meth == method:
                    body = self._body() if method != "GET" else {}
                    req = {"session_id": m.groups()[0] if m.groups() else None}
                    if name == "new":
                        req.update(op="new_session",
                                   kind=body.get("kind", "solver"),
                                   task_text=body.get("task_text"),
                                   seed=body.get("seed"))
                    elif name == "state":
                        req.update(op="get_state")
                    elif name == "choose":
                        req.update(op="choose", index=body.get("index"))
                    elif name == "mcts":
                        req.update(op="run_mcts",
                                   sims=body.get("sims", DEFAULT_MCTS_SIMS))
                    elif name == "step":
                        req.update(op="step_best",
                                   sims=body.get("sims", DEFAULT_MCTS_SIMS))
                    elif name == "undo":
                        req.update(op="undo")
                    elif name == "close":
                        req.update(op="close")
                    resp = handle(manager, req)
                    code = resp.get("error", {}).get("code", 200) \
                        if "error" in resp else 200
                    self._json(resp, code)
                    return True
            return False

        def do_GET(self):
            if self._dispatch("GET"):
                return
            self._static()

        def do_POST(self):
            if not self._dispatch("POST"):
                self._json({"error": {"code": 404, "message": "not found"}},
                           404)

        def do_DELETE(self):
            if not self._dispatch("DELETE"):
                self._json({"error": {"code": 404, "message": "not found"}},
                           404)

        def _static(self):
            rel = self.path.lstrip("/") or "index.html"
            target = (static_root / rel).resolve()
            if static_root.exists() and str(target).startswith(str(static_root)) \
                    and target.is_file():
                ctype = {"html": "text/html", "js": "text/javascript",
                         "css": "text/css", "map": "application/json",
                         }.get(target.suffix.lstrip("."),
                               "application/octet-stream")
                body = target.read_bytes()
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
            else:
                self._json({"error": {"code": 404, "message": "not found"}},
                           404)

    server = http.server.ThreadingHTTPServer(("127.0.0.1", port), Handler)
    if block:
        print(f"serving on http://127.0.0.1:{port} (protocol v{PROTOCOL_VERSION})")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
    return server


def stdio_main():
    """Line-delimited JSON requests on stdin, responses on stdout."""
    import sys
    manager = SessionManager()
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError as exc:
            resp = {"error": {"code": 400, "message": f"bad json: {exc}"}}
        else:
            resp = handle(manager, req)
        sys.stdout.write(json.dumps(resp) + "\n")
        sys.stdout.flush()


if __name__ == "__main__":
    stdio_main()
