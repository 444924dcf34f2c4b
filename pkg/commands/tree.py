from core.orchestrator import CommandRouter, RunContext
from services.tree_core import tree_service

router = CommandRouter("tree")


@router.command("check", "Tree check")
def check(ctx: RunContext) -> dict[str, str]:
    """Linear branches and circle/ball/arc counts per depth."""
    t = ctx.tree
    counts = [
        {
            "depth": k,
            "circle": t.circle_size(k),
            "ball": t.ball_size(k),
            "arcs": t.frontier_size(k),
        }
        for k in range(t.depth + 1)
    ]
    ctx.table("tree_counts", counts)

    branches = tree_service.check_linear_branches(t)
    ctx.table("linear_branches", [branches.model_dump()])
    ctx.check(
        "linear_branches_finite",
        branches.all_finite,
        longest=branches.max_branch_length,
        witness=branches.witness,
    )
    kind = "explicit" if t.explicit else "automaton"
    return {
        "Tree": f"{kind} tree, {len(t.automaton.types)} cone types, working depth {t.depth}.",
        "Linear branches": (
            f"longest run of single-child vertices: {branches.max_branch_length}"
            f" (top vertex {branches.witness or '-'}); all finite: {branches.all_finite}."
        ),
    }
