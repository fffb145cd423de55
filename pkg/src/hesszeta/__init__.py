"""Symbolic and numerical tools for Hessians of zeta-regularized determinants.

Submodules are imported lazily; ``import hesszeta`` is cheap.
"""
__version__ = "0.1.0"

__all__ = ["rational", "gamma_rational", "expr", "heat_symbol", "operators",
           "torus", "quadrature", "cli"]


def __getattr__(name):
    if name in __all__:
        import importlib
        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(name)
