from core.orchestrator import CommandRouter, RunContext
from services.montecarlo import walk_service
from services.operators import operator_service

router = CommandRouter("walk")


@router.command("estimate", "Monte Carlo hitting distribution against the analytic one")
def estimate(ctx: RunContext) -> dict[str, str]:
    q, t, task, settings = ctx.operator, ctx.tree, ctx.task, ctx.settings
    depth = min(task.record_depth, t.depth)
    start = t.vertex(task.start)
    settle = t.depth if start == () else depth

    result = walk_service.estimate_hitting(
        q,
        depth,
        task.n_walks,
        settings.seed,
        start=start,
        n_jobs=settings.n_jobs,
        settle_depth=settle,
    )
    ctx.table("walk_hitting", [a.model_dump(exclude={"vertex"}) for a in result.arcs])

    sections = {
        "Walks": (
            f"{result.n_walks} walks from {result.start}, seed {result.seed}, recorded at"
            f" depth {depth}, settled at depth {settle}; escape fraction"
            f" {result.escape_fraction:.3g}."
        ),
    }
    if start == ():
        analytic = operator_service.hitting_distribution(q, ctx.descent, depth)
        comparison = walk_service.compare_hitting(result, analytic)
        ok = all(c.within_3sigma for c in comparison)
        ctx.table("walk_comparison", [c.model_dump() for c in comparison], ok=ok)
        ctx.check(
            "hitting_within_3sigma",
            ok,
            failing=[c.arc for c in comparison if not c.within_3sigma],
        )
    else:
        father = start[:-1]
        passage = walk_service.estimate_first_passage(
            q, start, father, task.n_walks, settings.seed, n_jobs=settings.n_jobs
        )
        expected = float(ctx.descent.down(t, start))
        sigma = max(passage.stderr, (expected * (1 - expected) / passage.n_walks) ** 0.5)
        ctx.table(
            "walk_descent",
            [{**passage.model_dump(), "analytic": expected, "sigma": sigma}],
        )
        ctx.check(
            "descent_within_3sigma",
            abs(passage.frequency - expected) <= 3 * sigma + settings.kernel_tol,
            empirical=passage.frequency,
            analytic=expected,
        )
        sections["Descent"] = (
            f"walks from {passage.start} hit {passage.target} with frequency"
            f" {passage.frequency:.4f} (analytic {expected:.4f})."
        )
    return sections
