import logging
import math
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from config import get_settings
from models.measure import ArcMeasure
from models.operator import TransitionOperator
from models.tree import ROOT_CONE, Vertex
from models.walk import (
    ArcComparison,
    ArcEstimate,
    FirstPassageEstimate,
    HittingEstimate,
    WalkRecord,
)

logger = logging.getLogger(__name__)

# cone -> (cumulative weights over (father, child_0, ...), child cones)
Table = dict[str, tuple[np.ndarray, tuple[str, ...]]]


def _transition_table(p: TransitionOperator) -> Table:
    t = p.tree
    table: Table = {}
    for cone in [ROOT_CONE, *t.automaton.types]:
        row = p.row(cone)
        weights = [float(c) for c in row.coefficients()]
        if cone == ROOT_CONE:
            weights[0] = 0.0
        table[cone] = (np.cumsum(weights), t.child_cones(cone))
    return table


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _step(
    table: Table, cones: list[str], v: Vertex, rng: np.random.Generator
) -> Optional[Vertex]:
    """One move from v; None when v is absorbing."""
    cumulative, kids = table[cones[-1]]
    total = cumulative[-1]
    if not kids or total <= 0:
        return None
    j = int(np.searchsorted(cumulative, rng.random() * total, side="right"))
    if j == 0:
        cones.pop()
        return v[:-1]
    cones.append(kids[j - 1])
    return v + (j - 1,)


def _cones_along(p: TransitionOperator, v: Vertex) -> list[str]:
    cones = [ROOT_CONE]
    for i in v:
        cones.append(p.tree.child_cones(cones[-1])[i])
    return cones


def _run_walk(
    table: Table,
    start: Vertex,
    start_cones: list[str],
    record_depth: int,
    settle_depth: int,
    step_cap: int,
    rng: np.random.Generator,
    keep_path: bool,
) -> tuple[Optional[Vertex], int, list[Vertex]]:
    """Walk until depth settle_depth (or a leaf); the exit arc is the prefix at record_depth."""
    v, cones = start, list(start_cones)
    path = [v] if keep_path else []
    steps = 0
    while len(v) < settle_depth:
        if steps >= step_cap:
            return None, steps, path
        nxt = _step(table, cones, v, rng)
        if nxt is None:
            # absorbed at a leaf: its arc is hit
            break
        v = nxt
        steps += 1
        if keep_path:
            path.append(v)
    return v[:record_depth], steps, path


def _exit_batch(
    table: Table,
    start: Vertex,
    start_cones: list[str],
    record_depth: int,
    settle_depth: int,
    step_cap: int,
    seed: int,
    indices: range,
) -> list[Optional[Vertex]]:
    return [
        _run_walk(
            table, start, start_cones, record_depth, settle_depth, step_cap, _rng(seed, i), False
        )[0]
        for i in indices
    ]


def _passage_batch(
    table: Table,
    start: Vertex,
    start_cones: list[str],
    target: Vertex,
    escape_depth: int,
    step_cap: int,
    seed: int,
    indices: range,
) -> list[int]:
    """Per walk: 1 on hitting target, 0 on absorption, -1 on escape."""
    out = []
    for i in indices:
        rng = _rng(seed, i)
        v, cones, steps, outcome = start, list(start_cones), 0, -1
        while steps < step_cap and len(v) < escape_depth:
            nxt = _step(table, cones, v, rng)
            if nxt is None:
                outcome = 0
                break
            v = nxt
            steps += 1
            if v == target:
                outcome = 1
                break
        out.append(outcome)
    return out


def _chunks(n: int, parts: int) -> list[range]:
    size = max(1, math.ceil(n / parts))
    return [range(i, min(i + size, n)) for i in range(0, n, size)]


def _stderr(frequency: float, n: int) -> float:
    return math.sqrt(frequency * (1 - frequency) / n)


class WalkService:
    """Random-walk simulation used to cross-check the analytic operators."""

    def simulate_walk(
        self,
        p: TransitionOperator,
        start: Vertex,
        record_depth: int,
        step_cap: int,
        seed: int,
        index: int = 0,
    ) -> WalkRecord:
        """Walk index ``index`` of the stream seeded by ``seed``."""
        t = p.tree
        if step_cap < 1:
            raise ValueError("step_cap must be >= 1")
        if record_depth > t.depth:
            raise ValueError("record_depth exceeds the working depth")
        t.check(start)
        exit_arc, steps, path = _run_walk(
            _transition_table(p),
            start,
            _cones_along(p, start),
            record_depth,
            record_depth,
            step_cap,
            _rng(seed, index),
            True,
        )
        return WalkRecord(path=path, exit_arc=exit_arc, steps=steps, record_depth=record_depth)

    def estimate_hitting(
        self,
        p: TransitionOperator,
        depth: int,
        n_walks: int,
        seed: int,
        start: Vertex = (),
        step_cap: Optional[int] = None,
        n_jobs: Optional[int] = None,
        settle_depth: Optional[int] = None,
    ) -> HittingEstimate:
        """Exit frequencies on the arcs of generation ``depth`` with binomial errors.

        By default a walk exits at its first vertex of depth ``depth``. With
        ``settle_depth`` it keeps walking until that depth and exits on the
        arc containing its position there, which approximates the boundary
        point the walk converges to.
        """
        settings = get_settings()
        t = p.tree
        if n_walks < 1:
            raise ValueError("n_walks must be >= 1")
        if depth > t.depth:
            raise ValueError("record depth exceeds the working depth")
        settle_depth = depth if settle_depth is None else settle_depth
        if not depth <= settle_depth <= t.depth:
            raise ValueError("settle depth must lie between the record depth and D")
        t.check(start)
        step_cap = settings.walk_step_cap if step_cap is None else step_cap
        n_jobs = settings.n_jobs if n_jobs is None else n_jobs

        table = _transition_table(p)
        start_cones = _cones_along(p, start)
        batches = Parallel(n_jobs=n_jobs)(
            delayed(_exit_batch)(
                table, start, start_cones, depth, settle_depth, step_cap, seed, chunk
            )
            for chunk in _chunks(n_walks, max(n_jobs, 1))
        )
        exits = [v for batch in batches for v in batch]

        counts: dict[Vertex, int] = {}
        escapes = 0
        for v in exits:
            if v is None:
                escapes += 1
            else:
                counts[v] = counts.get(v, 0) + 1

        arcs = []
        for u in t.frontier(depth):
            count = counts.get(u, 0)
            frequency = count / n_walks
            arcs.append(
                ArcEstimate(
                    arc=t.name(u),
                    vertex=u,
                    count=count,
                    frequency=frequency,
                    stderr=_stderr(frequency, n_walks),
                )
            )
        logger.info(
            "%d walks from %s to depth %d: %d escaped", n_walks, t.name(start), depth, escapes
        )
        return HittingEstimate(
            start=t.name(start),
            record_depth=depth,
            n_walks=n_walks,
            seed=seed,
            arcs=arcs,
            escape_count=escapes,
        )

    def estimate_first_passage(
        self,
        p: TransitionOperator,
        start: Vertex,
        target: Vertex,
        n_walks: int,
        seed: int,
        escape_depth: int = 30,
        step_cap: Optional[int] = None,
        n_jobs: Optional[int] = None,
    ) -> FirstPassageEstimate:
        """Fraction of walks from start that ever hit target.

        A walk reaching ``escape_depth`` levels below start (or the step cap)
        is declared escaped and counted as a miss.
        """
        settings = get_settings()
        t = p.tree
        if n_walks < 1:
            raise ValueError("n_walks must be >= 1")
        t.check(start)
        t.check(target)
        step_cap = settings.walk_step_cap if step_cap is None else step_cap
        n_jobs = settings.n_jobs if n_jobs is None else n_jobs

        if start == target:
            outcomes = [1] * n_walks
        else:
            table = _transition_table(p)
            start_cones = _cones_along(p, start)
            cut = len(start) + escape_depth
            batches = Parallel(n_jobs=n_jobs)(
                delayed(_passage_batch)(
                    table, start, start_cones, target, cut, step_cap, seed, chunk
                )
                for chunk in _chunks(n_walks, max(n_jobs, 1))
            )
            outcomes = [o for batch in batches for o in batch]

        hits = sum(1 for o in outcomes if o == 1)
        frequency = hits / n_walks
        logger.debug("first passage %s -> %s: %d/%d", start, target, hits, n_walks)
        return FirstPassageEstimate(
            start=t.name(start),
            target=t.name(target),
            n_walks=n_walks,
            seed=seed,
            hits=hits,
            escapes=sum(1 for o in outcomes if o == -1),
            frequency=frequency,
            stderr=_stderr(frequency, n_walks),
        )

    def compare_hitting(
        self, estimate: HittingEstimate, analytic: ArcMeasure
    ) -> list[ArcComparison]:
        """Per-arc comparison; σ is the larger of the empirical and analytic binomial errors."""
        rows = []
        for arc in estimate.arcs:
            expected = float(analytic.mass(arc.vertex))
            sigma = max(arc.stderr, _stderr(min(max(expected, 0.0), 1.0), estimate.n_walks))
            diff = abs(expected - arc.frequency)
            rows.append(
                ArcComparison(
                    arc=arc.arc,
                    analytic=expected,
                    empirical=arc.frequency,
                    stderr=sigma,
                    within_3sigma=diff <= 3 * sigma + get_settings().kernel_tol,
                )
            )
        return rows


walk_service = WalkService()
