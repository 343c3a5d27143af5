"""Net pairwise spillover networks and their DOT / JSON / CSV exports.

JSON schema::

    {"nodes": [{"id": int, "label": str, "net": float, "out_strength": float,
                "in_strength": float, "role": "transmitter" | "receiver"}, ...],
     "edges": [{"source": int, "target": int, "weight": float}, ...]}

An edge ``source -> target`` means the source explains more of the target's
variation than the reverse; its weight is that net difference in percent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .connectedness import ConnectednessTable

ROLE_COLOR = {"transmitter": "pink", "receiver": "lightblue"}


@dataclass(frozen=True)
class Node:
    id: int
    label: str
    net: float
    out_strength: float
    in_strength: float
    role: str


@dataclass(frozen=True)
class Edge:
    source: int
    target: int
    weight: float


@dataclass(frozen=True)
class SpilloverNetwork:
    nodes: tuple
    edges: tuple

    def edge_set(self):
        lab = {n.id: n.label for n in self.nodes}
        return {(lab[e.source], lab[e.target], e.weight) for e in self.edges}

    def to_dict(self):
        return {"nodes": [asdict(n) for n in self.nodes], "edges": [asdict(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(Node(**n) for n in data["nodes"]), tuple(Edge(**e) for e in data["edges"]))


def build_network(table: ConnectednessTable, edge_threshold=0.0) -> SpilloverNetwork:
    npdc = table.npdc
    k = table.k
    edges = []
    for i in range(k):
        for j in range(k):
            # NPDC[i, j] > 0: j transmits to i on net
            if i != j and npdc[i, j] > edge_threshold:
                edges.append(Edge(j, i, float(npdc[i, j])))
    out_s = np.zeros(k)
    in_s = np.zeros(k)
    for e in edges:
        out_s[e.source] += e.weight
        in_s[e.target] += e.weight
    net = table.net
    nodes = tuple(
        Node(i, str(table.labels[i]), float(net[i]), float(out_s[i]), float(in_s[i]),
             "transmitter" if net[i] > 0 else "receiver")
        for i in range(k)
    )
    return SpilloverNetwork(nodes, tuple(edges))


def _quote(s):
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(network: SpilloverNetwork, name="spillover") -> str:
    wmax = max((e.weight for e in network.edges), default=0.0)
    lines = [f"digraph {_quote(name)} {{", "  node [style=filled];"]
    for n in network.nodes:
        lines.append(
            f"  n{n.id} [label={_quote(n.label)}, color={_quote(ROLE_COLOR[n.role])}, "
            f"width={_quote(f'{n.out_strength:.12g}')}];"
        )
    for e in network.edges:
        pen = 1.0 + 4.0 * e.weight / wmax
        lines.append(f"  n{e.source} -> n{e.target} [weight={_quote(f'{e.weight:.12g}')}, penwidth={_quote(f'{pen:.12g}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(network: SpilloverNetwork, path, fmt=None):
    """Write ``network`` as DOT, JSON or CSV (inferred from the suffix when ``fmt`` is None)."""
    fmt = (fmt or str(path).rsplit(".", 1)[-1]).lower()
    if fmt in ("dot", "gv"):
        text = to_dot(network)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(network.to_dict(), fh, indent=2)
    elif fmt == "csv":
        lab = {n.id: n.label for n in network.nodes}
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["source", "target", "weight"])
            for e in network.edges:
                w.writerow([lab[e.source], lab[e.target], repr(e.weight)])
    else:
        raise ValueError(f"unknown network format {fmt!r}; expected dot, json or csv")
    return path


def read_json(path) -> SpilloverNetwork:
    with open(path, encoding="utf-8") as fh:
        return SpilloverNetwork.from_dict(json.load(fh))
