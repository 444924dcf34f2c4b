from fractions import Fraction

from core.orchestrator import CommandRouter, RunContext
from services.operators import operator_service

router = CommandRouter("operator")


@router.command("solve", "First passage, regularity and hitting distribution")
def solve(ctx: RunContext) -> dict[str, str]:
    q, table, t = ctx.operator, ctx.descent, ctx.tree
    settings = ctx.settings
    tol = 0 if q.exact and q.is_forward_only else settings.kernel_tol

    ctx.table(
        "descent",
        [{"type": name, "descent": value} for name, value in sorted(table.descent.items())],
    )

    reports = {
        mode: operator_service.check_regularity(q, mode)
        for mode in ("very_regular", "product_decay")
    }
    ctx.table("regularity", [r.model_dump() for r in reports.values()])

    depth = min(ctx.task.kernel_depth, t.depth)
    hitting = operator_service.hitting_distribution(q, table, depth)
    rows = []
    for u in t.frontier(depth):
        passage = operator_service.first_passage(q, table, (), u)
        ratio = operator_service.hitting_kernel_ratio(q, table, u)
        rows.append(
            {
                "arc": t.name(u),
                "mass": hitting.mass(u),
                "first_passage": passage,
                "kernel_ratio": ratio,
            }
        )
    ctx.table("hitting", rows)
    total = sum(r["mass"] for r in rows)
    ctx.check("hitting_mass_total", abs(total - 1) <= tol, total=total)
    if not q.is_forward_only:
        # k(v) <= U(o, v)
        worst = max((r["kernel_ratio"] for r in rows if r["arc"] != "o"), default=0)
        ctx.check("kernel_below_first_passage", worst <= 1 + tol, max_ratio=worst)

    very_regular = reports["very_regular"]
    ascent_note = "not very regular."
    if very_regular.is_member:
        bound = 1 - very_regular.epsilon
        worst, witness = operator_service.max_descent(q, table)
        ctx.check(
            "descent_bound",
            worst <= bound + Fraction(1, 10**12),
            max_descent=worst,
            bound=bound,
            type=witness,
        )
        best, where = operator_service.max_ascent(q, table, depth)
        if very_regular.ascent_certified:
            ctx.check(
                "ascent_bound",
                best <= bound + Fraction(1, 10**12),
                max_ascent=best,
                bound=bound,
                vertex=t.name(where) if where is not None else None,
            )
        ascent_note = (
            f"max U(v_-, v) on B_{depth} is {best} at {t.name(where) if where else '-'}"
            f" (1 - ε = {bound})."
        )

    if q.is_positive():
        for v in t.frontier(min(1, depth)):
            norm = operator_service.kernel_normalization(q, table, v, hitting)
            ctx.check(f"kernel_normalized_{t.name(v)}", abs(norm - 1) <= tol, integral=norm)

    flags = ""
    if table.truncation_dependent:
        flags = "; truncation-dependent (depth-D leaves absorbing)"
    return {
        "Operator": f"{q.kind} operator on {len(q.rows)} types{flags}.",
        "Regularity": "\n".join(
            f"- {mode}: {r.is_member} (δ={r.delta}, ε={r.epsilon}, witness {r.witness})"
            for mode, r in reports.items()
        ),
        "Ascent": ascent_note,
    }
