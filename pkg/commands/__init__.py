from . import dirichlet, measure, operator, tree, universal, walk

routers = [
    tree.router,
    measure.router,
    operator.router,
    dirichlet.router,
    universal.router,
    walk.router,
]

__all__ = ["routers", "tree", "measure", "operator", "dirichlet", "universal", "walk"]
