"""Inspector wire protocol.

JSON request/response over a TCP socket, one object per line; a connection
that starts with an HTTP upgrade is served as a WebSocket so the browser
UI can speak the same protocol. Mutating operations run in the runtime
context at the next safepoint.
"""

import base64
import hashlib
import json
import queue
import socket
import struct
import threading

from ..errors import VMError
from .live import repl_eval, replace_method

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

MUTATING_OPS = {"gc_config_set", "eval", "replace_method", "clear_code_cache",
                "coverage_run"}


class InspectorServer:
    def __init__(self, rt, port=0, host="127.0.0.1"):
        self.rt = rt
        self.host = host
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(8)
        self.port = self.sock.getsockname()[1]
        self.running = False
        self._threads = []
        self._sessions = []

    def start(self):
        self.running = True
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        return self

    def stop(self):
        self.running = False
        try:
            self.sock.close()
        except OSError:
            pass
        for session in list(self._sessions):
            session.close()

    def _accept_loop(self):
        while self.running:
            try:
                conn, _ = self.sock.accept()
            except OSError:
                break
            session = _Session(self, conn)
            self._sessions.append(session)
            t = threading.Thread(target=session.run, daemon=True)
            t.start()

    # -- operations ------------------------------------------------------------

    def handle(self, request):
        """Dispatch one request dict to its operation; returns the reply."""
        rid = request.get("id")
        op = request.get("op")
        params = request.get("params") or {}
        handler = getattr(self, "op_" + str(op), None)
        if handler is None:
            return {"id": rid, "ok": False,
                    "error": {"code": "unknown_op", "message": "unknown op %r" % op}}
        try:
            if op in MUTATING_OPS:
                result = self.rt.call_at_safepoint(lambda: handler(params))
            else:
                result = handler(params)
            return {"id": rid, "ok": True, "result": result}
        except VMError as exc:
            return {"id": rid, "ok": False,
                    "error": {"code": "runtime_error", "message": str(exc)}}
        except (TypeError, KeyError, ValueError) as exc:
            return {"id": rid, "ok": False,
                    "error": {"code": "bad_request", "message": str(exc)}}

    def op_gc_stats(self, params):
        return [r.to_dict() for r in self.rt.memory.gc_stats()]

    def op_gc_config_get(self, params):
        return self.rt.memory.config.to_dict()

    def op_gc_config_set(self, params):
        self.rt.memory.set_config(**params)
        return self.rt.memory.config.to_dict()

    def op_engine_stats(self, params):
        engine = self.rt.engine
        stats = engine.cache.stats()
        stats["lookups"] = engine.lookup_count
        stats["sends"] = engine.send_count
        stats["rebinds"] = engine.rebind_count
        stats["inlineCache"] = engine.inline_cache
        return stats

    def op_code_cache_list(self, params):
        from ..engine.ir import print_code
        want_ir = params.get("selector")
        out = []
        for m in self.rt.engine.cache.methods():
            owner = getattr(m.owner, "name", None)
            entry = {"selector": m.selector, "owner": owner,
                     "pinned": id(m) in self.rt.engine.pinned}
            if want_ir and m.selector == want_ir and \
                    (params.get("owner") in (None, owner)):
                code = self.rt.engine.cache.get(m)
                if code is not None and code.builtin_fn is None:
                    entry["ir"] = print_code(code)
                elif code is not None:
                    entry["ir"] = "(builtin #%s)" % m.builtin
            out.append(entry)
        return out

    def op_send_site_list(self, params):
        out = []
        for site in self.rt.engine.send_sites:
            if site.rebind_count == 0:
                continue
            cached = None
            if site.cached_behavior:
                b = self.rt.behavior_by_anchor.get(site.cached_behavior)
                cached = getattr(b, "name", None)
            out.append({"selector": site.selector, "cachedBehavior": cached,
                        "rebinds": site.rebind_count,
                        "megamorphic": site.megamorphic})
        return out

    def op_eval(self, params):
        return repl_eval(self.rt, params["source"])

    def op_replace_method(self, params):
        replace_method(self.rt, params["behavior"], params["source"],
                       class_side=bool(params.get("classSide")))
        return {"accepted": True}

    def op_clear_code_cache(self, params):
        self.rt.engine.clear_code_cache()
        return {"cleared": True}

    def op_coverage_run(self, params):
        suite = params.get("suite", "TestSuite new")
        result = self.rt.evaluate("(%s) coverage" % suite)
        try:
            return self.rt.float_value(result)
        except VMError:
            return self.rt.print_string(result)

    def op_subscribe_events(self, params):
        return {"subscribed": True}


class _Session:
    def __init__(self, server, conn):
        self.server = server
        self.rt = server.rt
        self.conn = conn
        self.outbound = queue.Queue()
        self.subscribed = False
        self.closed = False
        self.websocket = False
        self._sink = None

    def close(self):
        if self.closed:
            return
        self.closed = True
        if self._sink is not None and self._sink in self.rt.event_sinks:
            self.rt.event_sinks.remove(self._sink)
        try:
            self.conn.close()
        except OSError:
            pass
        if self in self.server._sessions:
            self.server._sessions.remove(self)

    def run(self):
        try:
            first = self.conn.recv(4096)
            if not first:
                return
            if first.startswith(b"GET "):
                rest = first
                while b"\r\n\r\n" not in rest:
                    chunk = self.conn.recv(4096)
                    if not chunk:
                        return
                    rest += chunk
                self._ws_handshake(rest)
                self.websocket = True
                writer = threading.Thread(target=self._write_loop, daemon=True)
                writer.start()
                self._ws_read_loop()
            else:
                writer = threading.Thread(target=self._write_loop, daemon=True)
                writer.start()
                self._line_read_loop(first)
        except (OSError, ConnectionError):
            pass
        finally:
            self.close()

    # -- plain newline-JSON transport ----------------------------------------------

    def _line_read_loop(self, initial):
        buffer = initial
        while not self.closed:
            while b"\n" in buffer:
                line, buffer = buffer.split(b"\n", 1)
                line = line.strip()
                if line:
                    self._handle_raw(line)
            chunk = self.conn.recv(4096)
            if not chunk:
                return
            buffer += chunk

    def _write_loop(self):
        while not self.closed:
            try:
                payload = self.outbound.get(timeout=0.25)
            except queue.Empty:
                continue
            data = json.dumps(payload).encode("utf-8")
            try:
                if self.websocket:
                    self.conn.sendall(_ws_frame(data))
                else:
                    self.conn.sendall(data + b"\n")
            except (OSError, ConnectionError):
                return

    def _handle_raw(self, raw):
        try:
            request = json.loads(raw.decode("utf-8"))
            if not isinstance(request, dict):
                raise ValueError("request must be an object")
        except (ValueError, UnicodeDecodeError) as exc:
            self.outbound.put({"id": None, "ok": False,
                               "error": {"code": "bad_request", "message": str(exc)}})
            return
        if request.get("op") == "subscribe_events":
            self._subscribe()
        reply = self.server.handle(request)
        self.outbound.put(reply)

    def _subscribe(self):
        if self.subscribed:
            return
        self.subscribed = True

        def sink(record):
            self.outbound.put({"type": "event", "event": record})
        self._sink = sink
        self.rt.event_sinks.append(sink)

    # -- WebSocket transport ----------------------------------------------------------

    def _ws_handshake(self, request_bytes):
        text = request_bytes.decode("latin-1")
        key = ""
        for line in text.split("\r\n"):
            if line.lower().startswith("sec-websocket-key:"):
                key = line.split(":", 1)[1].strip()
        accept = base64.b64encode(
            hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        response = ("HTTP/1.1 101 Switching Protocols\r\n"
                    "Upgrade: websocket\r\n"
                    "Connection: Upgrade\r\n"
                    "Sec-WebSocket-Accept: %s\r\n\r\n" % accept)
        self.conn.sendall(response.encode("latin-1"))

    def _ws_read_loop(self):
        buffer = b""
        while not self.closed:
            chunk = self.conn.recv(4096)
            if not chunk:
                return
            buffer += chunk
            while True:
                frame, buffer = _ws_parse(buffer)
                if frame is None:
                    break
                opcode, payload = frame
                if opcode == 8:  # close
                    return
                if opcode in (1, 2):
                    self._handle_raw(payload)


def _ws_frame(data, opcode=1):
    header = bytes([0x80 | opcode])
    n = len(data)
    if n < 126:
        header += bytes([n])
    elif n < (1 << 16):
        header += bytes([126]) + struct.pack(">H", n)
    else:
        header += bytes([127]) + struct.pack(">Q", n)
    return header + data


def _ws_parse(buffer):
    if len(buffer) < 2:
        return None, buffer
    opcode = buffer[0] & 0x0F
    masked = buffer[1] & 0x80
    length = buffer[1] & 0x7F
    offset = 2
    if length == 126:
        if len(buffer) < 4:
            return None, buffer
        length = struct.unpack(">H", buffer[2:4])[0]
        offset = 4
    elif length == 127:
        if len(buffer) < 10:
            return None, buffer
        length = struct.unpack(">Q", buffer[2:10])[0]
        offset = 10
    if masked:
        if len(buffer) < offset + 4 + length:
            return None, buffer
        mask = buffer[offset:offset + 4]
        raw = buffer[offset + 4:offset + 4 + length]
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(raw))
        rest = buffer[offset + 4 + length:]
    else:
        if len(buffer) < offset + length:
            return None, buffer
        payload = buffer[offset:offset + length]
        rest = buffer[offset + length:]
    return (opcode, payload), rest
