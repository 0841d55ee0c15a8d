"""Network transports carrying link frames to external operator UIs.

Two servers speak the identical wire format (4-byte length prefix + JSON
body, exactly as produced by ``link.encode``):

* ``WebSocketFrameServer`` — one frame per binary WebSocket message; this is
  the browser-reachable endpoint behind ``telepath run --listen``.
* ``TcpFrameServer`` — the raw stream-socket variant for native clients,
  frames back to back on the stream.

Both only shuttle bytes: inbound frames queue up for the simulation thread
to poll, outbound frames are broadcast to every connected client. No
decoding happens on transport threads, so the single-threaded session
contract holds.
"""

from __future__ import annotations

import socket
import socketserver
import threading
from queue import Empty, SimpleQueue

from .link import FrameReader


class _FrameServerBase:
    def __init__(self) -> None:
        self._inbox: SimpleQueue = SimpleQueue()
        self._clients: set = set()
        self._lock = threading.Lock()

    def poll(self) -> list[bytes]:
        """Drain raw frames received since the last poll (simulation thread)."""
        frames = []
        while True:
            try:
                frames.append(self._inbox.get_nowait())
            except Empty:
                return frames

    @property
    def client_count(self) -> int:
        with self._lock:
            return len(self._clients)


class WebSocketFrameServer(_FrameServerBase):
    """Serve link frames as binary WebSocket messages."""

    def __init__(self, port: int, host: str = "0.0.0.0") -> None:
        super().__init__()
        from websockets.sync.server import serve

        self._server = serve(self._handler, host, port)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="ws-transport", daemon=True)
        self._thread.start()
        self.port = port

    def _handler(self, connection) -> None:
        with self._lock:
            self._clients.add(connection)
        try:
            for message in connection:
                if isinstance(message, bytes):
                    self._inbox.put(message)
        except Exception:
            pass
        finally:
            with self._lock:
                self._clients.discard(connection)

    def broadcast(self, frame: bytes) -> None:
        with self._lock:
            clients = list(self._clients)
        for conn in clients:
            try:
                conn.send(frame)
            except Exception:
                with self._lock:
                    self._clients.discard(conn)

    def close(self) -> None:
        self._server.shutdown()


class TcpFrameServer(_FrameServerBase):
    """Serve link frames over plain TCP, back to back on the stream."""

    def __init__(self, port: int, host: str = "0.0.0.0") -> None:
        super().__init__()
        outer = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                reader = FrameReader()
                with outer._lock:
                    outer._clients.add(self.request)
                try:
                    while True:
                        data = self.request.recv(65536)
                        if not data:
                            return
                        for frame in reader.feed(data):
                            outer._inbox.put(frame)
                except (ConnectionError, OSError, ValueError):
                    return
                finally:
                    with outer._lock:
                        outer._clients.discard(self.request)

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="tcp-transport", daemon=True)
        self._thread.start()
        self.port = self._server.server_address[1]

    def broadcast(self, frame: bytes) -> None:
        with self._lock:
            clients = list(self._clients)
        for sock in clients:
            try:
                sock.sendall(frame)
            except OSError:
                with self._lock:
                    self._clients.discard(sock)

    def close(self) -> None:
        self._server.shutdown()
        self._server.server_close()


class MultiTransport:
    """Fan inbound/outbound frames across several transport servers."""

    def __init__(self, *transports) -> None:
        self.transports = [t for t in transports if t is not None]

    def poll(self) -> list[bytes]:
        frames = []
        for t in self.transports:
            frames.extend(t.poll())
        return frames

    def broadcast(self, frame: bytes) -> None:
        for t in self.transports:
            t.broadcast(frame)

    def close(self) -> None:
        for t in self.transports:
            t.close()


def connect_tcp(port: int, host: str = "127.0.0.1") -> socket.socket:
    """Convenience client connector for the TCP frame server."""
    sock = socket.create_connection((host, port), timeout=5.0)
    return sock
