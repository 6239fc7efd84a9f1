import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import camera_profile, fixture_context  # noqa: E402


@pytest.fixture
def camera():
    return camera_profile()


@pytest.fixture
def ctx():
    return fixture_context()


@pytest.fixture
def camera_device(ctx):
    return ctx.device_by_mac("00:16:6c:aa:01:01")


@pytest.fixture
def live_server(config):
    """Real uvicorn server on a random local port: (base_url, gateway)."""
    import socket
    import threading
    import time

    import uvicorn

    from dada.gateway.api import create_app

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]

    app = create_app(config)
    server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=port,
                                           log_level="warning"))
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    yield f"http://127.0.0.1:{port}", app.state.gateway
    server.should_exit = True
    thread.join(timeout=5)
