"""Delimiter-separated file schemas: edges, nodes, equilibria, truth, reports.

Edges: ``network_id,source,target``. Nodes: ``network_id,node_id[,y][,x...]``.
Node ids are arbitrary strings mapped to dense indices per network in
first-appearance order. Floats are serialized with ``repr`` so a write ->
ingest -> write cycle is byte-identical.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .data import Dataset, build_dataset
from .exceptions import DataError
from .graph import Network, to_dense
from .model import LOGISTIC, LinkFunction, ModelFamily, Parameters

EDGE_HEADER = ["network_id", "source", "target"]


def _fmt(value) -> str:
    return repr(float(value))


def _read_rows(path):
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: empty file")
    return rows[0], rows[1:]


def ingest(
    edges_path,
    nodes_path,
    covariates: list | None = None,
    undirected: bool = False,
) -> Dataset:
    """Read an edge list and node table into a pooled dataset.

    ``covariates`` selects covariate columns by name (default: every column
    after ``network_id,node_id[,y]``). ``undirected`` symmetrizes the links.
    """
    node_header, node_rows = _read_rows(nodes_path)
    if node_header[:2] != ["network_id", "node_id"]:
        raise DataError(f"{nodes_path}: header must start with network_id,node_id")
    has_y = len(node_header) > 2 and node_header[2] == "y"
    x_cols = node_header[3:] if has_y else node_header[2:]
    if covariates is None:
        covariates = list(x_cols)
    missing = [c for c in covariates if c not in x_cols]
    if missing:
        raise DataError(f"{nodes_path}: covariate column(s) not found: {', '.join(missing)}")
    col_of = {c: node_header.index(c) for c in covariates}
    y_col = 2 if has_y else None

    order: list = []
    index_of: dict = {}
    y_map: dict = {}
    x_map: dict = {}
    for lineno, row in enumerate(node_rows, start=2):
        if len(row) != len(node_header):
            raise DataError(f"{nodes_path}:{lineno}: expected {len(node_header)} fields, got {len(row)}")
        net_id, node_id = row[0], row[1]
        if net_id not in index_of:
            index_of[net_id] = {}
            y_map[net_id] = []
            x_map[net_id] = []
            order.append(net_id)
        if node_id in index_of[net_id]:
            raise DataError(f"{nodes_path}:{lineno}: duplicate node {node_id!r} in network {net_id!r}")
        index_of[net_id][node_id] = len(index_of[net_id])
        if y_col is not None:
            try:
                y_val = float(row[y_col])
            except ValueError:
                raise DataError(f"{nodes_path}:{lineno}: outcome {row[y_col]!r} is not numeric")
            if y_val not in (0.0, 1.0):
                raise DataError(f"{nodes_path}:{lineno}: non-binary outcome {row[y_col]!r}")
            y_map[net_id].append(y_val)
        try:
            x_map[net_id].append([float(row[col_of[c]]) for c in covariates])
        except ValueError:
            raise DataError(f"{nodes_path}:{lineno}: non-numeric covariate value")

    edge_header, edge_rows = _read_rows(edges_path)
    if edge_header != EDGE_HEADER:
        raise DataError(f"{edges_path}: header must be {','.join(EDGE_HEADER)}")
    edges_by_net = {net_id: [] for net_id in order}
    for lineno, row in enumerate(edge_rows, start=2):
        if len(row) != 3:
            raise DataError(f"{edges_path}:{lineno}: expected 3 fields, got {len(row)}")
        net_id, src, dst = row
        if net_id not in index_of:
            raise DataError(f"{edges_path}:{lineno}: unknown network {net_id!r}")
        idx = index_of[net_id]
        if src not in idx:
            raise DataError(f"{edges_path}:{lineno}: unknown node {src!r} in network {net_id!r}")
        if dst not in idx:
            raise DataError(f"{edges_path}:{lineno}: unknown node {dst!r} in network {net_id!r}")
        edges_by_net[net_id].append((idx[src], idx[dst]))

    networks, X_list, y_list, ids_list = [], [], [], []
    for net_id in order:
        n = len(index_of[net_id])
        networks.append(Network.from_edges(net_id, n, edges_by_net[net_id], symmetrize=undirected))
        X_list.append(np.asarray(x_map[net_id], dtype=np.float64).reshape(n, len(covariates)))
        y_list.append(np.asarray(y_map[net_id]) if y_col is not None else None)
        ids_list.append(list(index_of[net_id].keys()))
    return build_dataset(networks, X_list, covariates, y_list=y_list, node_ids_list=ids_list)


def write_edges(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(EDGE_HEADER)
        for block in dataset.blocks:
            adj = to_dense(block.net.adjacency)
            for i, j in zip(*np.nonzero(adj)):
                writer.writerow([block.net.network_id, block.node_ids[i], block.node_ids[j]])


def write_nodes(dataset: Dataset, path, include_y: bool = True) -> None:
    include_y = include_y and dataset.has_outcomes
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        header = ["network_id", "node_id"] + (["y"] if include_y else []) + list(dataset.x_names)
        writer.writerow(header)
        for block in dataset.blocks:
            for i, node_id in enumerate(block.node_ids):
                row = [block.net.network_id, node_id]
                if include_y:
                    row.append(str(int(block.y[i])))
                row.extend(_fmt(v) for v in block.cov.X[i])
                writer.writerow(row)


def write_equilibria(dataset: Dataset, p_pooled, path) -> None:
    """Export ``network_id,node_id,p_star`` rows."""
    parts = dataset.split(np.asarray(p_pooled, dtype=np.float64))
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["network_id", "node_id", "p_star"])
        for block, values in zip(dataset.blocks, parts):
            for node_id, value in zip(block.node_ids, values):
                writer.writerow([block.net.network_id, node_id, _fmt(value)])


def coefficient_records(params: Parameters, dataset: Dataset) -> list:
    """Flat named-coefficient list for truth files and reports."""
    records = [("family", params.family.tag), ("link", params.link.tag)]
    if params.family.tag == "aggregate_conformity":
        records.append(("weights", params.family.weights))
    if params.family.tag == "generalized":
        records += [
            ("beta1", _fmt(params.family.beta1)),
            ("beta2", _fmt(params.family.beta2)),
            ("beta3", _fmt(params.family.beta3)),
        ]
    elif params.family.tag == "hom_conformity":
        records.append(("beta", _fmt(params.beta_h)))
    else:
        records += [
            ("beta_h", _fmt(params.beta_h)),
            ("delta_beta", _fmt(params.delta_beta)),
            ("beta_l", _fmt(params.beta_l)),
        ]
    for nid, value in zip(dataset.network_ids, params.gamma0):
        records.append((f"gamma0:{nid}", _fmt(value)))
    for name, value in zip(dataset.x_names, params.gamma1):
        records.append((f"gamma1:{name}", _fmt(value)))
    for name, value in zip(dataset.x_names, params.gamma2):
        records.append((f"gamma2:{name}", _fmt(value)))
    return records


def write_records(records, path) -> None:
    """Write ``name,value`` rows."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["name", "value"])
        for name, value in records:
            writer.writerow([name, value])


def read_records(path) -> dict:
    header, rows = _read_rows(path)
    if header != ["name", "value"]:
        raise DataError(f"{path}: header must be name,value")
    return {name: value for name, value in rows}


def read_params(path, dataset: Dataset) -> Parameters:
    """Rebuild a Parameters object from a truth/report file for this dataset."""
    rec = read_records(path)
    family_tag = rec.get("family", "het_conformity")
    link = LinkFunction.from_tag(rec.get("link", "logistic"))
    try:
        gamma0 = np.array([float(rec[f"gamma0:{nid}"]) for nid in dataset.network_ids])
        gamma1 = np.array([float(rec[f"gamma1:{x}"]) for x in dataset.x_names])
        gamma2 = np.array([float(rec[f"gamma2:{x}"]) for x in dataset.x_names])
    except KeyError as exc:
        raise DataError(f"{path}: missing coefficient {exc.args[0]!r}")
    beta_h = delta = 0.0
    if family_tag == "generalized":
        family = ModelFamily.generalized(float(rec["beta1"]), float(rec["beta2"]), float(rec["beta3"]))
    elif family_tag == "hom_conformity":
        family = ModelFamily.hom_conformity()
        beta_h = float(rec.get("beta", 0.0))
    else:
        family = ModelFamily(tag=family_tag, weights=rec.get("weights", "normalized"))
        beta_h = float(rec.get("beta_h", 0.0))
        delta = float(rec.get("delta_beta", 0.0))
    return Parameters(
        gamma0=gamma0, gamma1=gamma1, gamma2=gamma2,
        beta_h=beta_h, delta_beta=delta, family=family, link=link,
    )


def read_equilibria(path) -> dict:
    header, rows = _read_rows(path)
    if header != ["network_id", "node_id", "p_star"]:
        raise DataError(f"{path}: header must be network_id,node_id,p_star")
    out: dict = {}
    for net_id, node_id, value in rows:
        out.setdefault(net_id, {})[node_id] = float(value)
    return out
