import logging
from collections import deque
from fractions import Fraction
from typing import Any, Optional, Sequence

from config import get_settings
from core.errors import (
    ConfigError,
    DepthBudgetExceeded,
    MissingValue,
    NoChainWithinDepth,
    NotStochastic,
)
from core.numbers import to_float
from models.function import ArcFunction, Sector, TreeFunction, arc_node, tree_node
from models.measure import ArcMeasure
from models.operator import FirstPassageTable, TransitionOperator
from models.tree import ROOT_CONE, Tree, Vertex
from models.universality import (
    Approximant,
    CertificateStep,
    CompanionOperator,
    DisjointnessAudit,
    ExtensionResult,
    RulerSequence,
    TargetFamily,
    TargetMember,
    TransferResult,
    UniversalityCertificate,
    Visit,
    VisitReport,
)
from services.boundary_measure import measure_service
from services.operators import operator_service
from services.tree_core import tree_service

logger = logging.getLogger(__name__)

HALF = Fraction(1, 2)


def _function(target: TargetMember | ArcFunction) -> ArcFunction:
    return target.function if isinstance(target, TargetMember) else target


def _target_j(target: TargetMember | ArcFunction) -> int:
    return target.j if isinstance(target, TargetMember) else 0


class UniversalityService:
    """Universal and frequently universal harmonic functions, built step by step."""

    # --- ruler sequence ----------------------------------------------------

    def ruler_ell(self, k: int) -> int:
        return RulerSequence.ell(k)

    def ruler_r(self, k: int) -> int:
        return RulerSequence.r(k)

    def ruler_count(self, n: int, m: int) -> int:
        return RulerSequence.count(n, m)

    # --- targets -----------------------------------------------------------

    def target_family(self, t: Tree) -> TargetFamily:
        return TargetFamily(tree=t)

    def enumerate_targets(self, t: Tree, m: ArcMeasure, j: int) -> TargetMember:
        return self.target_family(m.tree if m is not None else t).member(j)

    # --- decay chains ------------------------------------------------------

    def find_decay_chain(
        self, q: TransitionOperator, u: Vertex, k: int, max_depth: Optional[int] = None
    ) -> list[Vertex]:
        """u = u_0 < u_1 < ... < u_k, each u_i (i >= 1) entered with 0 < q <= 1/2 from a
        father with at least two children. Shallowest endpoint, ties by BFS order."""
        t = q.tree
        t.check(u)
        max_depth = t.depth if max_depth is None else max_depth
        chain = self._chain(q, t.cone_at(u), k, max_depth - len(u))
        return [u + step for step in chain]

    def _chain(self, q: TransitionOperator, cone: str, k: int, budget: int) -> list[Vertex]:
        if k < 1:
            raise ValueError("chain length must be >= 1")
        t = q.tree
        queue: deque[tuple[str, int, Vertex, tuple[int, ...]]] = deque([(cone, 0, (), ())])
        seen = {(cone, 0)}
        while queue:
            c, count, path, marks = queue.popleft()
            if count == k:
                return [()] + [path[:p] for p in marks]
            if len(path) >= budget:
                continue
            kids = t.child_cones(c)
            row = q.row(c)
            for i, kid in enumerate(kids):
                share = row.forward[i]
                if share <= 0:
                    continue
                qualifies = len(kids) >= 2 and share <= HALF
                state = (kid, count + qualifies)
                if state in seen:
                    continue
                seen.add(state)
                step = path + (i,)
                queue.append((kid, state[1], step, marks + ((len(step),) if qualifies else ())))
        raise NoChainWithinDepth(
            "no decay chain within the working depth", {"type": cone, "k": k, "budget": budget}
        )

    # --- extension step ----------------------------------------------------

    def extend_matching(
        self,
        q: TransitionOperator,
        m: ArcMeasure,
        g: TreeFunction,
        target: TargetMember | ArcFunction,
        s: int,
        radius: Optional[int] = None,
        generations: Optional[Sequence[int]] = None,
    ) -> ExtensionResult:
        """Harmonic h equal to g on B_N whose lift at generation m_out lies within
        2^-k of the target, k = floor(log2 s) + 1.

        Below each u in C_N the target is kept except on the arc of a decay-chain
        endpoint, whose value is solved so that the average over I(u) is g(u);
        h is the arc-average of that step function, constant on sectors beyond
        m_out.
        """
        if s < 1:
            raise ValueError("s must be >= 1")
        t = m.tree
        self._check_compatible(q, m)
        n = radius if radius is not None else (g.defined_to or 0)
        if g.defined_to is not None and g.defined_to < n:
            raise MissingValue("g is not defined on B_N", {"N": n, "defined_to": g.defined_to})
        f = _function(target)
        k = s.bit_length()

        cones = sorted(t.reachable_cones(n)[n])
        chains = {c: self._chain(q, c, k, t.depth - n) for c in cones}
        m_out = max(n + max(len(ch[-1]) for ch in chains.values()), f.generation)
        if generations is not None:
            later = [x for x in sorted(generations) if x >= m_out]
            if not later:
                raise DepthBudgetExceeded(
                    "no admissible generation after the chains", {"m_out": m_out}
                )
            m_out = later[0]
        if m_out > t.depth:
            raise DepthBudgetExceeded(
                "extension needs a deeper tree", {"m_out": m_out, "D": t.depth}
            )

        endpoints = {c: self._deepen(m, c, chains[c][-1], m_out - n) for c in cones}
        weights = {c: self._relative_mass(m, c, e) for c, e in endpoints.items()}
        averages: dict[tuple[str, Sector], Sector] = {}
        extensions: dict[tuple[str, Any, Sector], Sector] = {}

        def extension(cone: str, g_value: Any, tnode: Sector) -> Sector:
            key = (cone, g_value, tnode)
            cached = extensions.get(key)
            if cached is not None:
                return cached
            e, rho = endpoints[cone], weights[cone]
            t_e = self._node_at(tnode, e).value
            avg = measure_service.sector_average(m, cone, tnode, averages).value
            x = (g_value - (avg - rho * t_e)) / rho
            modified = self._replace(t, cone, tnode, e, Sector.leaf(x))
            result = measure_service.sector_average(m, cone, modified, averages)
            extensions[key] = result
            return result

        rebuilt: dict[tuple[str, Sector, Sector, int], Sector] = {}

        def rebuild(cone: str, gnode: Sector, tnode: Sector, r: int) -> Sector:
            if r == 0:
                return extension(cone, gnode.value, tnode)
            key = (cone, gnode, tnode, r)
            cached = rebuilt.get(key)
            if cached is not None:
                return cached
            kids = t.child_cones(cone)
            if not kids:
                result = Sector.leaf(gnode.value)
            else:
                result = tree_node(
                    gnode.value,
                    (
                        rebuild(kid, gnode.child(i), tnode.child(i), r - 1)
                        for i, kid in enumerate(kids)
                    ),
                )
            rebuilt[key] = result
            return result

        h = TreeFunction(tree=t, root=rebuild(ROOT_CONE, g.root, f.root, n))
        dist = measure_service.dist_nu(m, measure_service.lift(h, m_out), f)
        bound = Fraction(1, 2**k)
        logger.debug(
            "extension N=%d -> m_out=%d, k=%d, dist=%s (bound %s)", n, m_out, k, dist, bound
        )
        return ExtensionResult(
            h=h,
            radius=n,
            m_out=m_out,
            k=k,
            dist_nu=dist,
            bound=bound,
            chains={c: chains[c] for c in cones},
        )

    def _check_compatible(self, q: TransitionOperator, m: ArcMeasure) -> None:
        if not q.is_forward_only:
            raise ConfigError("extension needs a forward-only operator", {"kind": q.kind})
        if not m.exact:
            raise ConfigError("extension needs an exact arc measure")
        if set(q.rows) != set(m.shares):
            raise ConfigError("operator and measure live on different trees")
        for cone in [ROOT_CONE, *q.rows]:
            if tuple(q.row(cone).forward) != tuple(m.child_shares(cone)):
                raise ConfigError(
                    "operator does not match the measure's forward probabilities",
                    {"type": cone},
                )

    def _deepen(self, m: ArcMeasure, cone: str, path: Vertex, depth: int) -> Vertex:
        """Extend a relative path to the given relative depth through the first
        child of positive mass, stopping at leaves."""
        t = m.tree
        c = cone
        for i in path:
            c = t.child_cones(c)[i]
        while len(path) < depth:
            kids = t.child_cones(c)
            if not kids:
                break
            shares = m.child_shares(c)
            i = next(i for i, share in enumerate(shares) if share > 0)
            path, c = path + (i,), kids[i]
        return path

    def _relative_mass(self, m: ArcMeasure, cone: str, path: Vertex) -> Fraction:
        t = m.tree
        rho, c = Fraction(1), cone
        for i in path:
            rho *= m.child_shares(c)[i]
            c = t.child_cones(c)[i]
        return rho

    def _node_at(self, node: Sector, path: Vertex) -> Sector:
        for i in path:
            node = node.child(i)
        return node

    def _replace(self, t: Tree, cone: str, node: Sector, path: Vertex, new: Sector) -> Sector:
        if not path:
            return new
        kids = t.child_cones(cone)
        children = [node.child(i) for i in range(len(kids))]
        i = path[0]
        children[i] = self._replace(t, kids[i], children[i], path[1:], new)
        return arc_node(children)

    # --- finite-stage universal approximation ------------------------------

    def universal_approximant(
        self,
        q: TransitionOperator,
        m: ArcMeasure,
        g: TreeFunction,
        tol: Fraction,
        targets: TargetFamily,
        count: int,
        s: int = 2,
    ) -> Approximant:
        """h with dist_H(h, g) < tol whose lifts visit 1/s-balls around f_1..f_count."""
        t = m.tree
        n = 0
        while Fraction(1, 2 ** t.ball_size(n)) >= tol:
            n += 1
            if n > t.depth:
                raise DepthBudgetExceeded("tolerance needs a deeper tree", {"tol": tol})
        if g.defined_to is not None and g.defined_to < n:
            raise DepthBudgetExceeded(
                "g is not known on a ball large enough for the tolerance",
                {"N": n, "defined_to": g.defined_to},
            )

        h, radius, visits = g, n, []
        for j in range(1, count + 1):
            member = targets.member(j)
            step = self.extend_matching(q, m, h, member, s, radius=radius)
            visits.append(
                Visit(target_j=j, generation=step.m_out, dist_nu=step.dist_nu, radius=step.bound)
            )
            h, radius = step.h, step.m_out

        known = t.depth if g.defined_to is None else g.defined_to
        terms = min(t.ball_size(known), get_settings().metric_terms)
        distance = tree_service.dist_H(h, g, terms=terms)
        logger.info(
            "approximant: radius %d, %d targets, dist_H <= %s",
            n,
            count,
            distance.value + distance.truncation_error,
        )
        return Approximant(h=h, radius=n, distance=distance, visits=visits)

    # --- frequently universal functions ------------------------------------

    def build_frequently_universal(
        self,
        q: TransitionOperator,
        m: ArcMeasure,
        seed: TreeFunction,
        targets: TargetFamily,
        horizon: int,
        radius: Optional[int] = None,
    ) -> tuple[TreeFunction, UniversalityCertificate]:
        """Step k moves from generation N + r_{k-1} to N + r_k and brings the lift
        within 2^-ℓ(k) of f_ℓ(k)."""
        t = m.tree
        n = radius if radius is not None else (seed.defined_to or 0)
        if n + RulerSequence.r(horizon) > t.depth:
            raise DepthBudgetExceeded(
                "ruler schedule does not fit the working depth",
                {"N": n, "r_K": RulerSequence.r(horizon), "D": t.depth},
            )

        h = seed
        schedule: list[tuple[int, int, TargetMember]] = []
        for k in range(1, horizon + 1):
            ell = RulerSequence.ell(k)
            member = targets.member(ell)
            start, goal = n + RulerSequence.r(k - 1), n + RulerSequence.r(k)
            try:
                step = self.extend_matching(
                    q, m, h, member, 2 ** (ell - 1), radius=start, generations=(goal,)
                )
            except DepthBudgetExceeded as e:
                raise NoChainWithinDepth(
                    "decay chain overruns the ruler schedule", {"k": k, "goal": goal}
                ) from e
            h = step.h
            schedule.append((k, goal, member))
            logger.debug("step %d: generation %d, target f_%d", k, goal, ell)

        steps = []
        for k, goal, member in schedule:
            ell = RulerSequence.ell(k)
            dist = measure_service.dist_nu(m, measure_service.lift(h, goal), member.function)
            bound = Fraction(1, 2**ell)
            steps.append(
                CertificateStep(
                    k=k,
                    r_k=RulerSequence.r(k),
                    ell=ell,
                    target_j=member.j,
                    generation=goal,
                    dist_nu=dist,
                    radius=bound,
                    ok=dist < bound,
                )
            )

        certificate = UniversalityCertificate(
            horizon=horizon,
            offset=n,
            steps=steps,
            harmonic_residual=operator_service.check_harmonic(q, h, depth=t.depth),
            seed_preserved=self._agree(seed.root, h.root, n),
        )
        logger.info(
            "frequently universal: %d steps, offset %d, certificate ok=%s",
            horizon,
            n,
            certificate.ok,
        )
        return h, certificate

    # --- transfer to nearest-neighbour operators ---------------------------

    def companion_operator(
        self, p: TransitionOperator, table: Optional[FirstPassageTable] = None
    ) -> CompanionOperator:
        """Forward-only Q whose arc measure is the hitting distribution of p."""
        if p.is_forward_only:
            return CompanionOperator(q=p, measure=measure_service.arc_measure_from_Q(p))
        if table is None:
            table = operator_service.descent_probabilities(p)
        nu = operator_service.hitting_distribution(p, table, p.tree.depth)
        limit = get_settings().share_denominator
        shares: dict[str, tuple[Fraction, ...]] = {}
        error = 0.0
        for cone, row in nu.shares.items():
            if not row:
                shares[cone] = ()
                continue
            head = [Fraction(float(s)).limit_denominator(limit) for s in row[:-1]]
            last = 1 - sum(head, Fraction(0))
            if last < 0:
                raise NotStochastic("rounded hitting shares exceed one", {"type": cone})
            shares[cone] = (*head, last)
            error = max(error, *(abs(float(a) - float(b)) for a, b in zip(shares[cone], row)))
        measure = ArcMeasure(tree=nu.tree, shares=shares)
        logger.info("companion operator: %d types, share error %.3g", len(shares), error)
        return CompanionOperator(
            q=measure_service.Q_from_arc_measure(measure), measure=measure, share_error=error
        )

    def transfer_frequently_universal(
        self,
        p: TransitionOperator,
        seed: TreeFunction,
        targets: TargetFamily,
        horizon: int,
        radius: Optional[int] = None,
        table: Optional[FirstPassageTable] = None,
        companion: Optional[CompanionOperator] = None,
    ) -> TransferResult:
        """Build for the companion Q, then take the Poisson transform under p of the
        boundary values at the last scheduled generation.

        Both functions have the same boundary martingale, so h agrees with the
        companion function at the root and keeps the seed's transform on B_N.
        """
        if table is None:
            table = operator_service.descent_probabilities(p)
        if companion is None:
            companion = self.companion_operator(p, table)
        m = companion.measure
        local_seed = TreeFunction(tree=m.tree, root=seed.root, defined_to=seed.defined_to)
        h_q, certificate = self.build_frequently_universal(
            companion.q, m, local_seed, targets, horizon, radius=radius
        )
        n = certificate.offset + RulerSequence.r(horizon)
        h = operator_service.poisson_transform(p, table, measure_service.lift(h_q, n))

        kept = operator_service.poisson_transform(
            p, table, measure_service.lift(local_seed, certificate.offset)
        )
        seed_gap = max(
            abs(to_float(h(v)) - to_float(kept(v))) for v in p.tree.ball(certificate.offset)
        )
        result = TransferResult(
            h=h,
            companion_h=h_q,
            companion=companion,
            certificate=certificate,
            generation=n,
            harmonic_residual=float(operator_service.check_harmonic(p, h)),
            root_gap=abs(to_float(h(())) - to_float(h_q(()))),
            seed_gap=seed_gap,
            tol=get_settings().transfer_tol,
        )
        logger.info(
            "transfer: generation %d, residual %.3g, root gap %.3g, ok=%s",
            n,
            result.harmonic_residual,
            result.root_gap,
            result.ok,
        )
        return result

    def _agree(self, a: Sector, b: Sector, depth: int) -> bool:
        """Same values on B_depth."""
        memo: dict[tuple[Sector, Sector, int], bool] = {}

        def same(x: Sector, y: Sector, r: int) -> bool:
            if x is y:
                return True
            if x.value != y.value:
                return False
            if r == 0 or (x.is_leaf and y.is_leaf):
                return True
            key = (x, y, r)
            if key not in memo:
                width = max(len(x.children), len(y.children))
                memo[key] = all(same(x.child(i), y.child(i), r - 1) for i in range(width))
            return memo[key]

        return same(a, b, depth)

    # --- audits ------------------------------------------------------------

    def visit_density(
        self,
        h: TreeFunction,
        m: ArcMeasure,
        center: TargetMember | ArcFunction,
        radius: Fraction,
        horizon: int,
        window: Optional[tuple[int, int]] = None,
    ) -> VisitReport:
        """Generations n <= horizon with dist_ν(h*_n, center) < radius, and the
        min/max of the running visit frequency over M in the window."""
        f = _function(center)
        visits = [
            n
            for n in range(1, horizon + 1)
            if measure_service.dist_nu(m, measure_service.lift(h, n), f) < radius
        ]
        lo, hi = window if window is not None else (max(1, horizon // 2), horizon)
        if not 1 <= lo <= hi <= horizon:
            raise ValueError("density window must satisfy 1 <= lo <= hi <= horizon")
        densities = [Fraction(sum(1 for n in visits if n <= M), M) for M in range(lo, hi + 1)]
        return VisitReport(
            visits=visits,
            lower_density=min(densities),
            upper_density=max(densities),
            window=(lo, hi),
        )

    def disjointness_audit(
        self,
        h: TreeFunction,
        m: ArcMeasure,
        centers: Sequence[TargetMember | ArcFunction],
        radii: Sequence[Fraction],
        horizon: int,
    ) -> DisjointnessAudit:
        """Visit sets of balls that are disjoint in dist_ν must not meet."""
        if len(centers) != len(radii):
            raise ValueError("one radius per center")
        reports = [
            self.visit_density(h, m, c, r, horizon) for c, r in zip(centers, radii)
        ]
        pairs, ok = [], True
        for i in range(len(centers)):
            for j in range(i + 1, len(centers)):
                gap = measure_service.dist_nu(m, _function(centers[i]), _function(centers[j]))
                disjoint = gap >= radii[i] + radii[j]
                overlap = sorted(set(reports[i].visits) & set(reports[j].visits))
                if disjoint and overlap:
                    ok = False
                pairs.append(
                    {
                        "i": i,
                        "j": j,
                        "target_i": _target_j(centers[i]),
                        "target_j": _target_j(centers[j]),
                        "balls_disjoint": disjoint,
                        "overlap": overlap,
                    }
                )
        return DisjointnessAudit(ok=ok, pairs=pairs)


universality_service = UniversalityService()
