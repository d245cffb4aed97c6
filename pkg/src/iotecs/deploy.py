"""Launch descriptors for simulation nodes on their declared platforms.

Nothing here starts anything: Docker nodes get a container descriptor, VM
nodes a provisioning manifest and Native nodes a shell launch line. Every node
also gets its slice file, which is all the node program needs to run.
"""

from __future__ import annotations

import json
import shlex
from pathlib import Path
from typing import Any

from .topology import NodeInstance, ResolvedTopology, node_to_dict

DEFAULT_IMAGE = "iotecs-node:latest"
CONTAINER_DIR = "/iotecs"


def _slice(topo: ResolvedTopology, node: NodeInstance) -> dict[str, Any]:
    return {
        "node": node_to_dict(node),
        "duration_ns": topo.duration_ns,
        "step_ns": topo.step_ns,
        "step_count": topo.step_count,
    }


def node_args(slice_path: str, out_path: str) -> list[str]:
    """Node program arguments. Add ``--epoch-ns`` to skip the start handshake."""
    return ["python3", "-m", "iotecs.runtime.node", "--slice", slice_path, "--out", out_path]


def docker_descriptor(node: NodeInstance, image: str = DEFAULT_IMAGE) -> dict[str, Any]:
    p = node.platform
    return {
        "node_id": node.node_id,
        "name": node.name,
        "platform": p.name,
        "image": image,
        "cpus": p.cpu,
        "memory": str(p.memory) if p.memory else None,
        "args": node_args(f"{CONTAINER_DIR}/node_{node.node_id}.slice.json", f"{CONTAINER_DIR}/node_{node.node_id}.json"),
    }


def vm_manifest(node: NodeInstance, slice_name: str) -> dict[str, Any]:
    p = node.platform
    return {
        "node_id": node.node_id,
        "name": node.name,
        "platform": p.name,
        "cpus": p.cpu,
        "memory": str(p.memory) if p.memory else None,
        "host": p.ip,
        "username": p.username,
        "password": p.password,
        "files": [slice_name],
        "args": node_args(slice_name, f"node_{node.node_id}.json"),
    }


def native_command(node: NodeInstance, slice_path: Path) -> str:
    out = slice_path.with_name(f"node_{node.node_id}.json")
    return shlex.join(node_args(str(slice_path), str(out)))


def emit_deploy_descriptors(topo: ResolvedTopology, out_dir: Path, image: str = DEFAULT_IMAGE) -> list[Path]:
    """Write one slice plus one platform descriptor per node; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    index = []
    for node in topo.nodes:
        slice_path = out_dir / f"node_{node.node_id}.slice.json"
        slice_path.write_text(json.dumps(_slice(topo, node), indent=2) + "\n")
        written.append(slice_path)
        kind = node.platform.kind
        if kind == "Docker":
            path = out_dir / f"node_{node.node_id}.docker.json"
            path.write_text(json.dumps(docker_descriptor(node, image), indent=2) + "\n")
        elif kind == "VM":
            path = out_dir / f"node_{node.node_id}.vm.json"
            path.write_text(json.dumps(vm_manifest(node, slice_path.name), indent=2) + "\n")
        else:
            path = out_dir / f"node_{node.node_id}.sh"
            path.write_text("#!/bin/sh\nexec " + native_command(node, slice_path.resolve()) + ' "$@"\n')
            path.chmod(0o755)
        written.append(path)
        index.append({"node_id": node.node_id, "name": node.name, "kind": kind, "descriptor": path.name})
    index_path = out_dir / "index.json"
    index_path.write_text(json.dumps({"topology_digest": topo.digest(), "nodes": index}, indent=2) + "\n")
    written.append(index_path)
    return written
