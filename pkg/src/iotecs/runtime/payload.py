from __future__ import annotations

import random

from ..topology import DeviceInstance


def payload_rng(seed: int, node_id: int, edge_id: int, device_id: int) -> random.Random:
    """Generator for one device's payload; string seeding is stable across runs."""
    return random.Random(f"{seed}/{node_id}/{edge_id}/{device_id}")


def make_payload(device: DeviceInstance, rng: random.Random) -> bytes:
    """Literal payloads verbatim; size-form payloads as pseudo-random bytes."""
    if isinstance(device.payload, bytes):
        return device.payload
    if device.payload < 1:
        raise ValueError("payload size must be at least 1 byte")
    return rng.randbytes(device.payload)
