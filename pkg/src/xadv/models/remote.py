"""Out-of-process adapters over newline-delimited JSON.

Each request is one JSON object per line::

    {"id": 3, "op": "grad", "image": "<base64 sidecar>", "prompt": "...", "target": "..."}

and the reply carries the same id plus ``value``/``gradient``, ``text`` or
``vector``; failures reply ``{"id": 3, "error": "..."}``. Images and
gradients travel as base64 of the raw sidecar encoding. ``op: "info"``
returns the adapter's identifier and encoder tag.

Endpoints accepted by :func:`resolve`:

- ``toy:surrogate``, ``toy:victim-shared``, ``toy:victim-independent``,
  ``toy:scorer`` (in-process toy stack, optional ``@seed`` suffix)
- ``stdio:<command line>`` (spawn a server and talk over its pipes)
- ``tcp://host:port``
"""

from __future__ import annotations

import argparse
import base64
import itertools
import json
import shlex
import socket
import socketserver
import subprocess
import sys
import threading

import numpy as np

from ..image import decode_sidecar, encode_sidecar
from .base import AdapterError

OPS = ("info", "grad", "generate", "embed_image", "embed_text")


def pack_array(arr) -> str:
    return base64.b64encode(encode_sidecar(np.asarray(arr, dtype=np.float64))).decode("ascii")


def unpack_array(text) -> np.ndarray:
    return decode_sidecar(base64.b64decode(text.encode("ascii")))


def _pack_vector(v):
    return [float(a) for a in np.asarray(v, dtype=np.float64).ravel()]


def handle(adapter, request):
    """Dispatch one decoded request to ``adapter`` and build the reply."""
    op = request.get("op")
    reply = {"id": request.get("id")}
    try:
        if op == "info":
            reply.update(
                identifier=getattr(adapter, "identifier", type(adapter).__name__),
                vision_encoder_tag=getattr(adapter, "vision_encoder_tag", ""),
                deterministic=bool(getattr(adapter, "deterministic", True)),
            )
        elif op == "grad":
            value, grad = adapter.objective_and_gradient(
                unpack_array(request["image"]), request.get("prompt", ""), request["target"])
            reply.update(value=float(value), gradient=pack_array(grad))
        elif op == "generate":
            reply["text"] = adapter.generate(unpack_array(request["image"]), request.get("prompt", ""))
        elif op == "embed_image":
            reply["vector"] = _pack_vector(adapter.embed_image(unpack_array(request["image"])))
        elif op == "embed_text":
            reply["vector"] = _pack_vector(adapter.embed_text(request["text"]))
        else:
            reply["error"] = f"unknown op {op!r}"
    except Exception as exc:  # noqa: BLE001
        reply["error"] = f"{type(exc).__name__}: {exc}"
    return reply


def serve(adapter, rfile, wfile):
    """Answer requests line by line until EOF."""
    for line in rfile:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            reply = {"id": None, "error": f"bad request: {exc}"}
        else:
            reply = handle(adapter, request)
        data = json.dumps(reply) + "\n"
        wfile.write(data.encode("utf-8") if "b" in getattr(wfile, "mode", "") else data)
        wfile.flush()


def serve_tcp(adapter, host="127.0.0.1", port=0):
    """Start a threaded TCP server; returns it (``server_address`` holds the port)."""
    lock = threading.Lock()

    class Handler(socketserver.StreamRequestHandler):
        def handle(self):
            for line in self.rfile:
                if not line.strip():
                    continue
                try:
                    request = json.loads(line)
                except json.JSONDecodeError as exc:
                    reply = {"id": None, "error": f"bad request: {exc}"}
                else:
                    with lock:
                        reply = handle(adapter, request)
                self.wfile.write((json.dumps(reply) + "\n").encode("utf-8"))
                self.wfile.flush()

    server = socketserver.ThreadingTCPServer((host, port), Handler)
    server.daemon_threads = True
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


class RemoteAdapter:
    """Client side; implements the surrogate, victim and scorer interfaces.

    Calls are serialized on a lock, so one connection may be shared across
    threads; ``thread_safe`` is True for that reason.
    """

    thread_safe = True

    def __init__(self, endpoint, identifier=None, timeout=120.0):
        self.endpoint = endpoint
        self._ids = itertools.count(1)
        self._lock = threading.Lock()
        self._proc = None
        self._sock = None
        if endpoint.startswith("stdio:"):
            cmd = shlex.split(endpoint[len("stdio:"):])
            if not cmd:
                raise AdapterError(endpoint, "empty stdio command")
            try:
                self._proc = subprocess.Popen(
                    cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL)
            except OSError as exc:
                raise AdapterError(endpoint, f"cannot start adapter: {exc}") from exc
            self._r, self._w = self._proc.stdout, self._proc.stdin
        elif endpoint.startswith("tcp://"):
            host, _, port = endpoint[len("tcp://"):].rpartition(":")
            try:
                self._sock = socket.create_connection((host, int(port)), timeout=timeout)
            except (OSError, ValueError) as exc:
                raise AdapterError(endpoint, f"cannot connect: {exc}") from exc
            self._r = self._sock.makefile("rb")
            self._w = self._sock.makefile("wb")
        else:
            raise AdapterError(endpoint, "endpoint must start with stdio: or tcp://")
        self.identifier = identifier or endpoint
        info = self._call({"op": "info"})
        self.identifier = identifier or info.get("identifier") or endpoint
        self.vision_encoder_tag = info.get("vision_encoder_tag", "")
        self.deterministic = bool(info.get("deterministic", True))

    def _call(self, request):
        with self._lock:
            request = dict(request, id=next(self._ids))
            try:
                self._w.write((json.dumps(request) + "\n").encode("utf-8"))
                self._w.flush()
                line = self._r.readline()
            except OSError as exc:
                raise AdapterError(self.identifier, f"transport failure: {exc}") from exc
        if not line:
            raise AdapterError(self.identifier, "adapter closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterError(self.identifier, f"malformed reply: {exc}") from exc
        if reply.get("error"):
            raise AdapterError(self.identifier, reply["error"])
        if reply.get("id") != request["id"]:
            raise AdapterError(self.identifier, "reply id mismatch")
        return reply

    def objective_and_gradient(self, image, prompt, target):
        r = self._call({"op": "grad", "image": pack_array(image), "prompt": prompt, "target": target})
        return float(r["value"]), unpack_array(r["gradient"])

    def generate(self, image, prompt):
        return self._call({"op": "generate", "image": pack_array(image), "prompt": prompt})["text"]

    def embed_image(self, image):
        return np.array(self._call({"op": "embed_image", "image": pack_array(image)})["vector"])

    def embed_text(self, text):
        return np.array(self._call({"op": "embed_text", "text": text})["vector"])

    def close(self):
        for f in (getattr(self, "_w", None), getattr(self, "_r", None)):
            try:
                if f is not None:
                    f.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        if self._proc is not None:
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


TOY_ROLES = ("surrogate", "victim-shared", "victim-independent", "scorer")


def toy_adapter(role, seed=0):
    from .toy import build_toy_stack

    stack = build_toy_stack(seed)
    table = {
        "surrogate": stack.surrogate,
        "victim-shared": stack.shared_victim,
        "victim-independent": stack.independent_victim,
        "scorer": stack.scorer,
    }
    if role not in table:
        raise ValueError(f"unknown toy role {role!r}; expected one of {TOY_ROLES}")
    return table[role]


def resolve(endpoint):
    """Turn an endpoint string into an adapter object."""
    if endpoint.startswith("toy:"):
        role, _, seed = endpoint[4:].partition("@")
        return toy_adapter(role, int(seed) if seed else 0)
    return RemoteAdapter(endpoint)


def main(argv=None):
    p = argparse.ArgumentParser(prog="python3 -m xadv.models.remote",
                                description="Serve a toy adapter over NDJSON.")
    p.add_argument("role", choices=TOY_ROLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tcp", metavar="HOST:PORT", help="listen on TCP instead of stdio")
    args = p.parse_args(argv)
    adapter = toy_adapter(args.role, args.seed)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        server = serve_tcp(adapter, host or "127.0.0.1", int(port))
        print(f"listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)
        try:
            threading.Event().wait()
        except KeyboardInterrupt:
            server.shutdown()
        return 0
    serve(adapter, sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())
