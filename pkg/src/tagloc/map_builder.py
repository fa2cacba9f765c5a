"""Tag map registration by pose-graph optimisation.

The mapping robot's trajectory is treated as known and fixed (the anchors);
each tag detection ties one tag node to one anchor. Every factor is
therefore unary and the problem separates per tag, but the solver below is
a general sparse Gauss-Newton / Levenberg loop so factors between tags can
be added without changing it.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Pose2, between, compose, pose_difference, wrap_angle

log = logging.getLogger(__name__)


@dataclass
class TagMap:
    """Registry of tag id -> global planar pose, with provenance metadata."""

    entries: dict[int, Pose2] = field(default_factory=dict)
    source: dict = field(default_factory=dict)

    def __getitem__(self, tag_id: int) -> Pose2:
        return self.entries[tag_id]

    def __contains__(self, tag_id) -> bool:
        return tag_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries))

    def ids(self) -> list[int]:
        return sorted(self.entries)


@dataclass(frozen=True)
class Observation:
    epoch: int
    tag_id: int
    relative_pose: Pose2
    info: np.ndarray


@dataclass
class MappingSession:
    robot_poses: dict[int, Pose2]
    observations: list[Observation]

    def validate(self) -> None:
        for ob in self.observations:
            if ob.epoch not in self.robot_poses:
                raise ValueError(f"observation of tag {ob.tag_id} at epoch {ob.epoch} has no anchor pose")
            if np.linalg.eigvalsh(0.5 * (ob.info + ob.info.T))[0] < -1e-12:
                raise ValueError(f"observation of tag {ob.tag_id} at epoch {ob.epoch}: info not PSD")


@dataclass(frozen=True)
class AnchoredTagFactor:
    """Tag seen from a fixed robot pose; residual in the robot frame."""

    key: int
    anchor: Pose2
    measured: Pose2
    info: np.ndarray

    @property
    def keys(self) -> tuple[int, ...]:
        return (self.key,)

    def linearize(self, values: dict[int, np.ndarray]):
        tag = Pose2.from_array(values[self.key])
        r = pose_difference(between(self.anchor, tag), self.measured)
        c, s = math.cos(self.anchor.theta), math.sin(self.anchor.theta)
        j = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        return r, {self.key: j}

    def error(self, values) -> float:
        r, _ = self.linearize(values)
        return float(r @ self.info @ r)


@dataclass
class PoseGraph:
    values: dict[int, np.ndarray]
    factors: list
    excluded: list[int] = field(default_factory=list)


@dataclass
class OptimizeStats:
    cost: float
    initial_cost: float
    iterations: int
    converged: bool
    cost_history: list[float]
    rms_residual: float


def build_graph(session: MappingSession, tag_ids=None) -> PoseGraph:
    """One node per observed tag, seeded from its first observation."""
    session.validate()
    values: dict[int, np.ndarray] = {}
    factors = []
    for ob in sorted(session.observations, key=lambda o: (o.epoch, o.tag_id)):
        anchor = session.robot_poses[ob.epoch]
        if ob.tag_id not in values:
            values[ob.tag_id] = compose(anchor, ob.relative_pose).as_array()
        factors.append(AnchoredTagFactor(ob.tag_id, anchor, ob.relative_pose, np.asarray(ob.info, float)))
    excluded = []
    for t in tag_ids or ():
        if t not in values:
            log.warning("tag %s has no observations and is left out of the map", t)
            excluded.append(t)
    return PoseGraph(values, factors, excluded)


def total_cost(graph: PoseGraph, values=None) -> float:
    values = graph.values if values is None else values
    return sum(f.error(values) for f in graph.factors)


def _normal_equations(graph: PoseGraph, order: dict[int, int]):
    n = 3 * len(order)
    rows, cols, data = [], [], []
    b = np.zeros(n)
    for f in graph.factors:
        r, jac = f.linearize(graph.values)
        wr = f.info @ r
        for ka, ja in jac.items():
            ia = 3 * order[ka]
            b[ia : ia + 3] -= ja.T @ wr
            for kb, jb in jac.items():
                ib = 3 * order[kb]
                block = ja.T @ f.info @ jb
                ii, jj = np.meshgrid(np.arange(ia, ia + 3), np.arange(ib, ib + 3), indexing="ij")
                rows.append(ii.ravel())
                cols.append(jj.ravel())
                data.append(block.ravel())
    hess = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsc()
    return hess, b


def _retract(values, order, delta):
    out = {}
    for k, i in order.items():
        v = values[k] + delta[3 * i : 3 * i + 3]
        v[2] = wrap_angle(v[2])
        out[k] = v
    return out


def optimize(graph: PoseGraph, max_iters: int = 50, tol: float = 1e-12) -> TagMap:
    """Minimise the information-weighted squared residuals.

    Plain Gauss-Newton steps are tried first; a step that raises the cost
    is retried with Levenberg damping. The result's ``source`` carries the
    residual statistics and a ``converged`` flag (False if ``max_iters`` ran
    out, in which case the best iterate is returned).
    """
    order = {k: i for i, k in enumerate(sorted(graph.values))}
    cost = total_cost(graph)
    history = [cost]
    converged = False
    lam = 0.0
    it = 0
    if not graph.factors:
        converged = True
    while not converged and it < max_iters:
        it += 1
        hess, b = _normal_equations(graph, order)
        diag = sp.diags(hess.diagonal())
        accepted = False
        for _ in range(12):
            try:
                delta = spla.spsolve((hess + lam * diag).tocsc(), b)
            except RuntimeError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                trial = _retract(graph.values, order, delta)
                new_cost = total_cost(graph, trial)
                if new_cost <= cost:
                    accepted = True
                    break
            lam = 1e-4 if lam == 0.0 else 10.0 * lam
        if not accepted:
            # no descent direction left: already at the optimum numerically
            converged = True
            break
        graph.values = trial
        change = cost - new_cost
        cost = new_cost
        history.append(cost)
        lam = 0.0 if lam <= 1e-4 else lam / 10.0
        if change < tol or np.max(np.abs(delta)) < 1e-14:
            converged = True

    n_res = 3 * len(graph.factors)
    rms = math.sqrt(cost / n_res) if n_res else 0.0
    stats = OptimizeStats(cost, history[0], it, converged, history, rms)
    entries = {k: Pose2.from_array(v) for k, v in sorted(graph.values.items())}
    source = {
        "cost": stats.cost,
        "initial_cost": stats.initial_cost,
        "iterations": stats.iterations,
        "converged": stats.converged,
        "rms_weighted_residual": stats.rms_residual,
        "n_observations": len(graph.factors),
        "excluded_tags": list(graph.excluded),
        "cost_history": stats.cost_history,
    }
    return TagMap(entries, source)
