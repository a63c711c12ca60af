"""HTTP/1.1 JSON API and server-sent event stream over a ClosedLoop.

One writer at a time: every command and every tick runs under the gateway
lock, so the loop's snapshots stay linearizable. GET endpoints never
mutate. The event stream replays from ``?from=`` then tails the live log;
``id:`` carries the seq so clients resume without gaps or duplicates.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .canon import canonical_dumps
from .loop import ApiResult, ClosedLoop
from .scenarios import ScenarioError, scenario_from_doc


class GatewayServer:
    def __init__(self, loop: ClosedLoop, host: str = "127.0.0.1", port: int = 0,
                 auto_tick_interval: float | None = None):
        self.loop = loop
        self.lock = threading.RLock()
        self.auto_tick_interval = auto_tick_interval
        self._stop = threading.Event()
        self._tick_thread: threading.Thread | None = None
        handler = _make_handler(self)
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self.port = self.httpd.server_port

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> None:
        threading.Thread(target=self.httpd.serve_forever, daemon=True).start()
        if self.auto_tick_interval:
            self._tick_thread = threading.Thread(target=self._tick_loop, daemon=True)
            self._tick_thread.start()

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def _tick_loop(self) -> None:
        while not self._stop.wait(self.auto_tick_interval):
            with self.lock:
                self.loop.step()

    # -- command surface ------------------------------------------------------

    def handle_get(self, path: str) -> ApiResult:
        with self.lock:
            store = self.loop.store
            if path == "/intents":
                return ApiResult(200, {"intents": [i.to_doc() for _, i in sorted(store.intents.items())]})
            if path == "/policies":
                return ApiResult(200, {"policies": [store.policies[k] for k in sorted(store.policies)],
                                       "active": sorted(store.active)})
            if path == "/verdicts":
                return ApiResult(200, {"verdicts": [store.verdicts[k] for k in sorted(store.verdicts)]})
            if path == "/escalations":
                return ApiResult(200, {"escalations": [e for _, e in sorted(store.escalations.items())]})
            if path == "/plans":
                return ApiResult(200, {"plans": [store.plans[k] for k in sorted(store.plans)]})
            if path == "/status":
                return ApiResult(200, {"tick": self.loop.sim.tick_now, "seq": self.loop.log.head_seq,
                                       "scenario": self.loop.scenario.name})
            return ApiResult(404, {"error": f"no such resource {path}"})

    def handle_post(self, path: str, body: dict) -> ApiResult:
        with self.lock:
            if path == "/intents":
                return self.loop.submit_intent(body.get("text", ""))
            if path.startswith("/escalations/"):
                escalation_id = path.split("/")[2]
                return self.loop.resolve_escalation(
                    escalation_id, body.get("decision", ""), body.get("suspend_id")
                )
            if path.startswith("/plans/") and path.endswith("/decision"):
                plan_id = path.split("/")[2]
                return self.loop.decide_plan(plan_id, body.get("decision", ""))
            if path == "/tick":
                count = int(body.get("count", 1))
                for _ in range(max(0, count)):
                    self.loop.step()
                return ApiResult(200, {"tick": self.loop.sim.tick_now})
            if path == "/scenario":
                try:
                    scenario = scenario_from_doc(body)
                except ScenarioError as exc:
                    return ApiResult(422, {"error": str(exc)})
                self.loop = ClosedLoop(
                    scenario=scenario,
                    seed=scenario.default_seed,
                    config=self.loop.config,
                    noise=self.loop.noise,
                )
                return ApiResult(201, {"scenario": scenario.name})
            return ApiResult(404, {"error": f"no such resource {path}"})


def _make_handler(gateway: GatewayServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # tests stay quiet
            pass

        def _send_json(self, result: ApiResult) -> None:
            data = canonical_dumps(result.body).encode("utf-8")
            self.send_response(result.status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def do_OPTIONS(self):
            self.send_response(204)
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            url = urlparse(self.path)
            if url.path == "/events":
                self._stream_events(url)
                return
            self._send_json(gateway.handle_get(url.path))

        def do_POST(self):
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                body = json.loads(raw.decode("utf-8")) if raw.strip() else {}
            except json.JSONDecodeError:
                self._send_json(ApiResult(400, {"error": "body is not valid JSON"}))
                return
            if not isinstance(body, dict):
                self._send_json(ApiResult(400, {"error": "body must be a JSON object"}))
                return
            self._send_json(gateway.handle_post(url_path(self.path), body))

        def _stream_events(self, url) -> None:
            params = parse_qs(url.query)
            try:
                from_seq = int(params.get("from", ["1"])[0])
            except ValueError:
                self._send_json(ApiResult(400, {"error": "from must be an integer"}))
                return
            log = gateway.loop.log
            if from_seq > log.head_seq + 1:
                self._send_json(ApiResult(416, {"error": f"seq {from_seq} beyond head {log.head_seq}"}))
                return
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            next_seq = max(1, from_seq)
            try:
                while not gateway._stop.is_set():
                    if log.wait_for(next_seq, timeout=0.25):
                        record = log.get(next_seq)
                        # no `event:` field: unnamed frames reach EventSource.onmessage
                        chunk = f"id: {record.seq}\ndata: {record.to_line()}\n\n"
                        self.wfile.write(chunk.encode("utf-8"))
                        self.wfile.flush()
                        next_seq += 1
                    else:
                        self.wfile.write(b": ping\n\n")
                        self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return

    return Handler


def url_path(raw: str) -> str:
    return urlparse(raw).path
