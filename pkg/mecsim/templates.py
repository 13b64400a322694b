"""
Task-graph templates and deployment defaults.

All component cycles and edge volumes below are SYNTHETIC stand-ins: the
applications are only described by shape, never by measured weights.
Update them here, nowhere else.

Entry point: graph_template(name, params, seed) -> TaskGraph
"""

from typing import Any, Mapping

import numpy as np

from mecsim.taskgraph import TaskGraph, validate

TEMPLATE_NAMES = ("face_like", "qr_like", "layered_random")

# Deployment defaults (declared config, not measured)
AREA_M = 2000.0
N_STATIONS = 16
N_CLOUDS = 4
N_USERS = 400
MIN_DISTANCE_M = 1.0


class UnknownTemplate(ValueError):
    pass


# ---------------------------------------------------------------------------
# face_like: deep chain with one side branch into the output
# ---------------------------------------------------------------------------

FACE_COMPONENTS: list[tuple[str, float]] = [
    ("frame_capture",    2e7),
    ("face_detect",      9e8),
    ("feature_extract",  7e8),
    ("classify",         6e8),
    ("landmark_track",   3e8),
    ("render",           1e7),   # output
]

FACE_EDGES: list[tuple[int, int, float]] = [
    (0, 1, 2.4e6),
    (1, 2, 8e5),
    (2, 3, 2e5),
    (3, 5, 8e3),
    (1, 4, 4e5),
    (4, 5, 1.6e4),
]

# ---------------------------------------------------------------------------
# qr_like: capture fans out into parallel binarize -> decode stages
# ---------------------------------------------------------------------------

QR_STAGES = 4
QR_CAPTURE_CYCLES = 3e7
QR_BINARIZE_CYCLES = 2e8
QR_DECODE_CYCLES = 4e8
QR_MERGE_CYCLES = 2e7
QR_CAPTURE_BITS = 1.5e6     # capture -> binarize, per stage
QR_BINARIZE_BITS = 4e5      # binarize -> decode
QR_DECODE_BITS = 2e3        # decode -> merge

# ---------------------------------------------------------------------------
# layered_random defaults
# ---------------------------------------------------------------------------

LAYERED_DEFAULTS: dict[str, Any] = {
    "layers": 4,
    "width": 3,
    "edge_prob": 0.4,
    "cycles_range": (1e8, 1e9),
    "bits_range": (1e4, 2e6),
}


def face_like() -> TaskGraph:
    return validate({
        "components": [{"id": i, "cycles": c, "label": name}
                       for i, (name, c) in enumerate(FACE_COMPONENTS)],
        "edges": [{"src": s, "dst": d, "bits": b} for s, d, b in FACE_EDGES],
        "output": len(FACE_COMPONENTS) - 1,
    })


def qr_like(stages: int = QR_STAGES) -> TaskGraph:
    components = [{"id": 0, "cycles": QR_CAPTURE_CYCLES, "label": "capture"}]
    edges = []
    merge = 2 * stages + 1
    for k in range(stages):
        binarize, decode = 1 + 2 * k, 2 + 2 * k
        components.append({"id": binarize, "cycles": QR_BINARIZE_CYCLES, "label": f"binarize_{k}"})
        components.append({"id": decode, "cycles": QR_DECODE_CYCLES, "label": f"decode_{k}"})
        edges.append({"src": 0, "dst": binarize, "bits": QR_CAPTURE_BITS})
        edges.append({"src": binarize, "dst": decode, "bits": QR_BINARIZE_BITS})
        edges.append({"src": decode, "dst": merge, "bits": QR_DECODE_BITS})
    components.append({"id": merge, "cycles": QR_MERGE_CYCLES, "label": "merge"})
    return validate({"components": components, "edges": edges, "output": merge})


def layered_random(params: Mapping[str, Any] | None, seed: int) -> TaskGraph:
    """
    Layered DAG: `layers - 1` layers of `width` components feeding a single
    output. Every component links to at least one component of the next
    layer; extra forward links appear with probability `edge_prob`.
    """
    p = {**LAYERED_DEFAULTS, **(params or {})}
    layers, width = int(p["layers"]), int(p["width"])
    if layers < 1 or width < 1:
        raise ValueError("layered_random needs layers >= 1 and width >= 1")
    if not 0.0 <= float(p["edge_prob"]) <= 1.0:
        raise ValueError("edge_prob must be in [0, 1]")
    rng = np.random.default_rng(seed)
    lo_c, hi_c = p["cycles_range"]
    lo_b, hi_b = p["bits_range"]

    sizes = [width] * (layers - 1) + [1]
    ids_by_layer = []
    next_id = 0
    for size in sizes:
        ids_by_layer.append(list(range(next_id, next_id + size)))
        next_id += size

    components = [{"id": i, "cycles": float(rng.uniform(lo_c, hi_c))} for i in range(next_id)]
    edges = []
    for here, nxt in zip(ids_by_layer, ids_by_layer[1:]):
        for src in here:
            forced = int(rng.integers(len(nxt)))
            for pos, dst in enumerate(nxt):
                if pos == forced or rng.random() < p["edge_prob"]:
                    edges.append({"src": src, "dst": dst, "bits": float(rng.uniform(lo_b, hi_b))})
    return validate({"components": components, "edges": edges, "output": next_id - 1})


def graph_template(name: str, params: Mapping[str, Any] | None = None, seed: int = 0) -> TaskGraph:
    if name == "face_like":
        return face_like()
    if name == "qr_like":
        stages = int((params or {}).get("stages", QR_STAGES))
        return qr_like(stages)
    if name == "layered_random":
        return layered_random(params, seed)
    raise UnknownTemplate(f"unknown task-graph template {name!r}, expected one of {TEMPLATE_NAMES}")
