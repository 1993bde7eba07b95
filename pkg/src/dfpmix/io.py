"""File formats: CSV datasets, Newick trees, JSON run summaries.

CSV is the RFC-4180 comma/LF subset with an optional header and an optional
label column.  Newick carries one tree with unit branch lengths and
``[&n=...,phi=...]`` comments; ``import_newick`` reads back exactly what
``export_newick`` writes, byte-identically on re-export.  Run summaries use
the versioned "dfp-run/1" JSON schema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tree import ROOT, NodeId, TreeArena

RUN_SCHEMA = "dfp-run/1"


# -- datasets ----------------------------------------------------------------


@dataclass
class Dataset:
    """Points plus optional labels, column names, and the standardization
    that produced the points (mean/scale per column), if any."""

    points: np.ndarray
    labels: Optional[list] = None
    names: Optional[list] = None
    standardization: Optional[dict] = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.labels is not None and len(self.labels) != len(self.points):
            raise ValueError("one label per point required")


def _looks_like_header(row) -> bool:
    for cell in row:
        try:
            float(cell)
        except ValueError:
            return True
    return False


def load_csv(
    path,
    label_column=None,
    header: Optional[bool] = None,
    standardize: bool = False,
) -> Dataset:
    """Read a dataset; ``label_column`` is a column name (requires a header)
    or 0-based index.  ``header=None`` sniffs: a first row with any
    non-numeric cell is taken as names.  Errors name the offending row and
    column, 1-based, counting the header."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise ValueError(f"{path}: empty file")
    if header is None:
        header = _looks_like_header(rows[0])
    names = rows[0] if header else None
    body = rows[1:] if header else rows
    if not body:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])

    if label_column is None:
        label_idx = None
    elif isinstance(label_column, str):
        if names is None:
            raise ValueError("label column named by string requires a header row")
        if label_column not in names:
            raise ValueError(f"no column named {label_column!r}")
        label_idx = names.index(label_column)
    else:
        label_idx = int(label_column)
        if not 0 <= label_idx < width:
            raise ValueError(f"label column {label_idx} out of range for {width} columns")

    feature_cols = [j for j in range(width) if j != label_idx]
    points = np.empty((len(body), len(feature_cols)))
    labels = [] if label_idx is not None else None
    offset = 2 if header else 1
    for r, row in enumerate(body):
        if len(row) != width:
            raise ValueError(
                f"{path}: row {r + offset}: expected {width} fields, got {len(row)}"
            )
        for k, j in enumerate(feature_cols):
            try:
                value = float(row[j])
            except ValueError:
                raise ValueError(
                    f"{path}: row {r + offset}, column {j + 1}: "
                    f"could not parse {row[j]!r}"
                ) from None
            if not math.isfinite(value):
                raise ValueError(
                    f"{path}: row {r + offset}, column {j + 1}: non-finite value"
                )
            points[r, k] = value
        if labels is not None:
            labels.append(row[label_idx])

    feature_names = (
        [names[j] for j in feature_cols] if names is not None else None
    )
    standardization = None
    if standardize:
        mean = points.mean(axis=0)
        scale = points.std(axis=0)
        scale[scale == 0.0] = 1.0
        points = (points - mean) / scale
        standardization = {"mean": mean.tolist(), "scale": scale.tolist()}
    return Dataset(
        points=points, labels=labels, names=feature_names, standardization=standardization
    )


def save_points_csv(path_or_file, points, labels=None, names=None) -> None:
    """Write points (and optional labels as a final column) so that
    ``load_csv`` reproduces them exactly; floats use %.17g."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if labels is not None and len(labels) != len(points):
        raise ValueError("one label per point required")
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        if names is not None:
            if len(names) != points.shape[1]:
                raise ValueError("one name per feature column required")
            writer.writerow(list(names) + (["label"] if labels is not None else []))
        for r, row in enumerate(points):
            out = [format(v, ".17g") for v in row]
            if labels is not None:
                out.append(str(labels[r]))
            writer.writerow(out)
    finally:
        if own:
            fh.close()


# -- Newick trees ------------------------------------------------------------


def _phi_of(tree: TreeArena, nid: NodeId, annotations) -> Optional[np.ndarray]:
    if annotations is not None and nid in annotations:
        return np.atleast_1d(np.asarray(annotations[nid], dtype=float))
    phi = tree.node(nid).phi
    return None if phi is None else np.atleast_1d(np.asarray(phi, dtype=float))


def _comment(tree: TreeArena, nid: NodeId, annotations) -> str:
    phi = _phi_of(tree, nid, annotations)
    n = tree.node(nid).n_desc
    if phi is None:
        return f"[&n={n}]"
    return f"[&n={n},phi={' '.join(format(v, '.6f') for v in phi)}]"


def _label(tree: TreeArena, nid: NodeId) -> str:
    if nid == ROOT:
        return "root"
    dotted = ".".join(str(i) for i in nid)
    if len(nid) == tree.depth:
        return f"{dotted}_n{tree.node(nid).n_here}"
    return dotted


def export_newick(tree: TreeArena, annotations=None) -> str:
    """One-line Newick: children in index order, every branch length 1.0,
    comments carrying n_desc and (when available) phi to 6 decimals; a bare
    root renders in the ``root;`` form."""

    def render(nid: NodeId) -> str:
        kids = sorted(tree.node(nid).children)
        inner = ",".join(render(nid + (i,)) for i in kids)
        text = f"({inner})" if inner else ""
        text += _label(tree, nid) + _comment(tree, nid, annotations)
        return text + (";" if nid == ROOT else ":1.0")

    return render(ROOT)


class _NewickScanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise ValueError("newick text ended unexpectedly")
        return self.text[self.pos]

    def take(self, ch: str) -> None:
        if self.peek() != ch:
            raise ValueError(f"expected {ch!r} at position {self.pos}")
        self.pos += 1

    def until(self, stops: str) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in stops:
            self.pos += 1
        return self.text[start : self.pos]


def import_newick(text: str) -> tuple:
    """Parse a tree written by :func:`export_newick`.

    Returns (tree, annotations): counts are rebuilt from the leaf names and
    cross-checked against the comments; annotations maps NodeId to the
    parsed phi vectors (empty when none were written).
    """
    scan = _NewickScanner(text.strip())
    entries = []  # (node_id, claimed n_desc, n_here, phi or None), preorder

    def parse(depth: int) -> None:
        if scan.peek() == "(":
            scan.take("(")
            while True:
                parse(depth + 1)
                if scan.peek() == ",":
                    scan.take(",")
                    continue
                break
            scan.take(")")
        label = scan.until("[")
        scan.take("[")
        body = scan.until("]")
        scan.take("]")
        if depth > 0:
            scan.take(":")
            length = scan.until(",);")
            if float(length) != 1.0:
                raise ValueError(f"branch lengths must be 1.0, got {length!r}")
        if not body.startswith("&n="):
            raise ValueError(f"malformed comment {body!r}")
        phi = None
        if "," in body:
            head, phi_part = body.split(",", 1)
            if not phi_part.startswith("phi="):
                raise ValueError(f"malformed comment {body!r}")
            phi = np.array([float(v) for v in phi_part[4:].split()])
            n_desc = int(head[3:])
        else:
            n_desc = int(body[3:])
        if depth == 0:
            if label != "root":
                raise ValueError(f"root label must be 'root', got {label!r}")
            nid: NodeId = ROOT
            n_here = 0
        else:
            name = label.rsplit("_n", 1)
            dotted = name[0]
            n_here = int(name[1]) if len(name) == 2 else 0
            nid = tuple(int(p) for p in dotted.split("."))
        entries.append((nid, n_desc, n_here, phi))

    parse(0)
    scan.take(";")
    if scan.pos != len(scan.text):
        raise ValueError("trailing characters after ';'")

    depth = max((len(nid) for nid, *_ in entries), default=0)
    depth_for_tree = depth if depth else 1  # a bare root still needs an arena
    tree = TreeArena(depth_for_tree)
    annotations = {}
    claimed = {}
    for nid, n_desc, n_here, phi in entries:
        if nid != ROOT:
            tree.ensure_path(nid)
        claimed[nid] = n_desc
        if phi is not None:
            annotations[nid] = phi
            tree.node(nid).phi = phi
        if n_here:
            if len(nid) != depth_for_tree:
                raise ValueError(f"data count on non-leaf node {nid!r}")
            tree.node(nid).n_here = n_here
            tree.add_count(nid, n_here)
    for nid, n in claimed.items():
        if tree.node(nid).n_desc != n:
            raise ValueError(
                f"count mismatch at {nid!r}: comment says {n}, "
                f"leaves sum to {tree.node(nid).n_desc}"
            )
    return tree, annotations


# -- nested-object tree form and run summaries -------------------------------


def tree_to_nested(tree: TreeArena, annotations=None) -> dict:
    """JSON-ready nested form: id (path), n, n_here, phi, children in index
    order."""

    def build(nid: NodeId) -> dict:
        phi = _phi_of(tree, nid, annotations)
        return {
            "id": list(nid),
            "n": tree.node(nid).n_desc,
            "n_here": tree.node(nid).n_here,
            "phi": None if phi is None else [float(v) for v in phi],
            "children": [build(nid + (i,)) for i in sorted(tree.node(nid).children)],
        }

    return build(ROOT)


def tree_from_nested(obj: dict, depth: int) -> TreeArena:
    tree = TreeArena(depth)

    def build(node: dict) -> None:
        nid = tuple(node["id"])
        if nid != ROOT:
            tree.ensure_path(nid)
        if node.get("phi") is not None:
            tree.node(nid).phi = np.asarray(node["phi"], dtype=float)
        n_here = int(node.get("n_here", 0))
        if n_here:
            tree.node(nid).n_here = n_here
            tree.add_count(nid, n_here)
        for child in node["children"]:
            build(child)

    build(obj)
    return tree


def export_run_json(trace, config: dict, tree: TreeArena, assignments, seed, annotations=None) -> str:
    """Serialize one run: schema id, config echo, seed, thinned trace rows,
    final tree (nested form), final assignments."""
    doc = {
        "schema": RUN_SCHEMA,
        "config": dict(config),
        "seed": seed,
        "trace": [dict(rec) for rec in trace],
        "tree": tree_to_nested(tree, annotations),
        "assignments": [list(leaf) for leaf in assignments],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


@dataclass
class RunSummary:
    config: dict
    seed: object
    trace: list
    tree: TreeArena
    assignments: list = field(default_factory=list)


def load_run_json(text: str) -> RunSummary:
    doc = json.loads(text)
    if doc.get("schema") != RUN_SCHEMA:
        raise ValueError(f"unsupported run schema {doc.get('schema')!r}")
    depth = int(doc["config"]["depth"])
    return RunSummary(
        config=doc["config"],
        seed=doc["seed"],
        trace=doc["trace"],
        tree=tree_from_nested(doc["tree"], depth),
        assignments=[tuple(leaf) for leaf in doc["assignments"]],
    )
