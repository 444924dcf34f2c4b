from fractions import Fraction
from typing import Any

from core.numbers import Gaussian, modulus, to_float
from core.orchestrator import CommandRouter, RunContext
from models.function import ArcFunction
from services.operators import operator_service

router = CommandRouter("dirichlet")


@router.command("solve", "Dirichlet problem on a contour")
def solve(ctx: RunContext) -> dict[str, str]:
    """Linear solve, cross-checked against the contour summation formula."""
    q, t, task = ctx.operator, ctx.tree, ctx.task
    tol = ctx.settings.dirichlet_tol

    if task.contour:
        contour = operator_service.make_contour(t, [t.vertex(name) for name in task.contour])
    else:
        contour = operator_service.circle_contour(t, min(task.contour_depth, t.depth))
    ordered = sorted(contour.vertices)
    if task.boundary_values:
        values: dict[Any, Any] = {t.vertex(name): v for name, v in task.boundary_values.items()}
    else:
        # default data: the position of the vertex along the contour
        values = {v: Gaussian(i) for i, v in enumerate(ordered)}

    h = operator_service.solve_dirichlet(q, contour, values)
    interior = sorted(contour.interior, key=lambda v: (len(v), v))

    rows, worst = [], 0.0
    for v in interior:
        summed = to_float(operator_service.contour_summation(q, contour, values, start=v))
        worst = max(worst, abs(h(v) - summed))
        rows.append({"vertex": t.name(v), "role": "interior", "value": h(v), "summation": summed})
    for v in ordered:
        rows.append({"vertex": t.name(v), "role": "contour", "value": h(v), "summation": h(v)})
    ctx.table("dirichlet_solution", rows)
    ctx.check("summation_matches_solve", worst <= tol, max_difference=worst)

    residual = operator_service.check_harmonic(q, h, region=interior)
    ctx.check("harmonic_on_interior", residual <= tol, residual=residual)

    boundary = [to_float(values[v]) for v in ordered]
    if all(isinstance(x, float) for x in boundary):
        inside = [h(v) for v in interior]
        ctx.check(
            "maximum_principle",
            max(inside) <= max(boundary) + tol and min(inside) >= min(boundary) - tol,
            interior_max=max(inside),
            contour_max=max(boundary),
        )

    generation = min(task.kernel_depth, t.depth)
    one = ArcFunction.constant(t, Fraction(1), generation=generation)
    transform = operator_service.poisson_transform(q, ctx.descent, one)
    gap = modulus(transform(()) - 1)
    ctx.check("poisson_transform_of_one", gap <= ctx.settings.kernel_tol, value=transform(()))

    return {
        "Contour": (
            f"{len(ordered)} contour vertices, {len(interior)} interior vertices;"
            f" solve vs summation max difference {worst:.3g}."
        ),
    }
