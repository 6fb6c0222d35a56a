import json
import socket
import threading

import pytest

from gymbridge.projection import default_segment_map_path
from gymbridge.server import BridgeServer


def gymnasium_humanoid_available() -> bool:
    try:
        import gymnasium

        env = gymnasium.make("Humanoid-v4")
        env.close()
        return True
    except Exception:
        return False


HUMANOID_AVAILABLE = gymnasium_humanoid_available()


class ServerFixture:
    def __init__(self, env_id: str):
        self.server = BridgeServer("127.0.0.1", 0, env_id, default_segment_map_path())
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self) -> str:
        return f"127.0.0.1:{self.server.port}"

    def stop(self):
        self.server.stop()
        self.thread.join(timeout=5)


@pytest.fixture
def synthetic_server():
    fixture = ServerFixture("SyntheticHumanoid-v0")
    yield fixture
    fixture.stop()


class WireClient:
    """Minimal protocol client speaking raw JSON lines (no windowrl import)."""

    def __init__(self, endpoint: str):
        host, port = endpoint.rsplit(":", 1)
        self.sock = socket.create_connection((host, int(port)), timeout=30)
        self.fh = self.sock.makefile("rwb")

    def request(self, payload: dict) -> dict:
        self.fh.write(json.dumps(payload).encode() + b"\n")
        self.fh.flush()
        return json.loads(self.fh.readline().decode())

    def send_raw(self, data: bytes) -> dict:
        self.fh.write(data)
        self.fh.flush()
        return json.loads(self.fh.readline().decode())

    def close(self):
        try:
            self.request({"cmd": "close"})
        finally:
            self.fh.close()
            self.sock.close()
