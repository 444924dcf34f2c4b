from fractions import Fraction

from core.numbers import to_float
from core.orchestrator import CommandRouter, RunContext
from models.function import TreeFunction
from models.universality import RulerSequence, TargetFamily
from services.universality import universality_service

router = CommandRouter("universal")


def _construct(ctx: RunContext):
    """Build for a forward-only operator, or for the companion of a nearest-neighbour one.

    Returns the function carrying the boundary martingale, its certificate, the
    targets, the measure they live on and the transfer (None when forward-only).
    """
    t, task, op = ctx.tree, ctx.task, ctx.operator
    seed = TreeFunction.constant(t, task.seed_value)
    if op.is_forward_only:
        targets = TargetFamily(tree=ctx.measure.tree)
        h, certificate = universality_service.build_frequently_universal(
            op, ctx.measure, seed, targets, task.horizon, radius=task.seed_radius
        )
        return h, certificate, targets, ctx.measure, None

    companion = universality_service.companion_operator(op, ctx.descent)
    targets = TargetFamily(tree=companion.measure.tree)
    transfer = universality_service.transfer_frequently_universal(
        op,
        seed,
        targets,
        task.horizon,
        radius=task.seed_radius,
        table=ctx.descent,
        companion=companion,
    )
    return transfer.companion_h, transfer.certificate, targets, companion.measure, transfer


@router.command("build", "Frequently universal harmonic function")
def build(ctx: RunContext) -> dict[str, str]:
    _, certificate, _, _, transfer = _construct(ctx)
    ctx.table(
        "certificate",
        [s.model_dump() for s in certificate.steps],
        ok=all(s.ok for s in certificate.steps),
    )
    for step in certificate.steps:
        ctx.check(
            f"step_{step.k}_within_ball",
            step.ok,
            generation=step.generation,
            dist_nu=step.dist_nu,
            radius=step.radius,
        )
    ctx.check(
        "harmonic_exact",
        certificate.harmonic_residual == 0,
        residual=certificate.harmonic_residual,
    )
    ctx.check("seed_preserved", certificate.seed_preserved, radius=certificate.offset)
    last = certificate.offset + RulerSequence.r(certificate.horizon)
    summary = {
        "Construction": (
            f"{certificate.horizon} ruler steps from seed radius {certificate.offset}"
            f" to generation {last}; certificate ok: {certificate.ok}."
        ),
    }
    if transfer is None:
        return summary

    tol = transfer.tol
    ctx.check("p_harmonic", transfer.harmonic_residual <= tol, residual=transfer.harmonic_residual)
    ctx.check("same_boundary_root", transfer.root_gap <= tol, gap=transfer.root_gap)
    ctx.check("seed_preserved_p", transfer.seed_gap <= tol, gap=transfer.seed_gap)
    ctx.table(
        "transfer",
        [
            {
                "vertex": ctx.tree.name(v),
                "value_p": str(to_float(transfer.h(v))),
                "value_q": str(transfer.companion_h(v)),
            }
            for v in ctx.tree.ball(min(transfer.generation, 3))
        ],
    )
    summary["Transfer"] = (
        f"Poisson transform of generation {transfer.generation} through the hitting"
        f" distribution (shares rounded within {transfer.companion.share_error:.3g});"
        f" ok: {transfer.ok}."
    )
    return summary


@router.command("audit", "Visit densities of a frequently universal function")
def audit(ctx: RunContext) -> dict[str, str]:
    h, certificate, targets, m, _ = _construct(ctx)
    task = ctx.task
    horizon = certificate.offset + RulerSequence.r(certificate.horizon)
    centers = [targets.member(j) for j in task.centers]
    radii = [task.radius or Fraction(1, 2**j) for j in task.centers]

    rows = []
    for center, radius in zip(centers, radii):
        report = universality_service.visit_density(h, m, center, radius, horizon)
        rows.append(
            {
                "target_j": center.j,
                "radius": radius,
                "visits": " ".join(map(str, report.visits)),
                "window_lo": report.window[0],
                "window_hi": report.window[1],
                "lower_density": report.lower_density,
                "upper_density": report.upper_density,
            }
        )
        ctx.check(f"visits_target_{center.j}", bool(report.visits), count=len(report.visits))
    ctx.table("visit_density", rows)

    disjoint = universality_service.disjointness_audit(h, m, centers, radii, horizon)
    ctx.table(
        "disjointness",
        [{**p, "overlap": " ".join(map(str, p["overlap"]))} for p in disjoint.pairs],
    )
    ctx.check("disjoint_balls_disjoint_visits", disjoint.ok, pairs=len(disjoint.pairs))
    return {
        "Audit": f"{len(centers)} balls over generations 1..{horizon}.",
    }


@router.command("approximate", "Finite-stage universal approximation")
def approximate(ctx: RunContext) -> dict[str, str]:
    t, task = ctx.tree, ctx.task
    g = TreeFunction.constant(t, task.seed_value)
    targets = TargetFamily(tree=ctx.measure.tree)
    result = universality_service.universal_approximant(
        ctx.operator, ctx.measure, g, task.tol, targets, task.count, s=task.s
    )
    ctx.table("visits", [v.model_dump() for v in result.visits])
    for visit in result.visits:
        ctx.check(
            f"target_{visit.target_j}_within_ball",
            visit.dist_nu <= visit.radius,
            generation=visit.generation,
            dist_nu=visit.dist_nu,
        )
    bound = result.distance.value + result.distance.truncation_error
    ctx.check("close_to_g", bound < task.tol, dist_h_bound=bound, tol=task.tol)
    return {
        "Approximant": (
            f"equal to g on B_{result.radius}; dist_H(h, g) <= {bound}"
            f" over {result.distance.terms} terms."
        ),
    }
