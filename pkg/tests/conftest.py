from __future__ import annotations

import sys

import pytest

from iotecs.cloud import CloudConfig, CloudServer


@pytest.fixture
def cloud_factory():
    servers: list[CloudServer] = []

    def make(**kwargs) -> CloudServer:
        kwargs.setdefault("host", "127.0.0.1")
        server = CloudServer(CloudConfig(**kwargs)).start()
        servers.append(server)
        return server

    yield make
    for s in servers:
        s.stop()


@pytest.fixture
def cloud(cloud_factory) -> CloudServer:
    return cloud_factory()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
