import logging

from core.errors import ZeroMassArc
from core.orchestrator import CommandRouter, RunContext
from models.universality import TargetFamily
from services.boundary_measure import measure_service
from services.operators import operator_service

logger = logging.getLogger(__name__)

router = CommandRouter("measure")


@router.command("build", "Arc measure and forward-only operator")
def build(ctx: RunContext) -> dict[str, str]:
    m = ctx.measure
    try:
        q = measure_service.Q_from_arc_measure(m)
        pruned = False
    except ZeroMassArc:
        m = measure_service.prune(m)
        q = measure_service.Q_from_arc_measure(m)
        pruned = True
        logger.info("pruned zero-mass arcs before building Q")
    t = m.tree
    tol = 0 if m.exact else ctx.settings.additivity_tol

    back = measure_service.arc_measure_from_Q(q)
    ctx.check(
        "measure_round_trip",
        back.shares == m.shares and back.root_shares == m.root_shares,
    )

    depth = min(ctx.task.kernel_depth, t.depth)
    arcs = list(t.frontier(depth))
    masses = [m.mass(u) for u in arcs]
    ctx.table(
        "arc_masses",
        [{"arc": t.name(u), "depth": len(u), "mass": mass} for u, mass in zip(arcs, masses)],
    )
    ctx.check("arc_masses_sum_to_one", abs(sum(masses) - 1) <= tol, total=sum(masses))

    # a grid step function from the target family, averaged back onto the tree
    target = TargetFamily(tree=t).member(ctx.task.count)
    h = measure_service.project_dagger(m, target.function)
    residual = operator_service.check_harmonic(q, h)
    ctx.check("dagger_harmonic", residual <= tol, residual=residual)
    if m.exact:
        relifted = measure_service.project_dagger(
            m, measure_service.lift(h, target.generation)
        )
        ctx.check("lift_then_average_is_identity", relifted.root is h.root)

    levels = measure_service.martingale_levels(m, h, depth=min(t.depth, target.generation + 2))
    result = measure_service.validate_martingale(m, levels)
    ctx.check("martingale_consistent", result.ok, level=result.level, vertex=result.vertex)
    first = levels.levels[0]
    ctx.table(
        "martingale_levels",
        [
            {"level": n, "dist_nu_to_level_0": measure_service.dist_nu(m, level, first)}
            for n, level in enumerate(levels.levels)
        ],
    )

    notes = "zero-mass arcs were pruned before building Q." if pruned else "no pruning needed."
    return {
        "Measure": (
            f"{'exact' if m.exact else 'floating-point'} measure on {len(t.automaton.types)}"
            f" cone types; {notes}"
        ),
        "Test function": f"target f_{target.j} (generation {target.generation}).",
    }
