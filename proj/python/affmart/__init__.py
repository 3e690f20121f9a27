"""Conservativeness and martingale checks for affine processes."""

import json

from ._affmart import Model as _Model
from ._affmart import RiccatiError, SimulationError, SpecError

__all__ = ["Model", "load", "parse", "RiccatiError", "SimulationError", "SpecError"]


class Model:
    """Admissible parameter set. Components are 1-based, R_0 is the constant term."""

    def __init__(self, impl):
        self._impl = impl

    @property
    def m(self):
        return self._impl.m

    @property
    def n(self):
        return self._impl.n

    def to_dict(self):
        return json.loads(self._impl.to_json())

    def violations(self):
        return json.loads(self._impl.violations())

    def R(self, j, u):
        return self._impl.R(j, [complex(v) for v in u])

    def flow(self, u, T, tol=1e-10):
        """(times, psi_0, psi) on the solver grid."""
        return self._impl.flow([complex(v) for v in u], T, tol)

    def conservativeness(self):
        return json.loads(self._impl.conservativeness())

    def martingale(self, component=1, form="stochastic_exp", p=0.0, P=()):
        return json.loads(self._impl.martingale(form, component, p, list(P)))

    def truncate(self, atoms):
        return Model(self._impl.truncate(atoms))

    def stoch_exp_mean(self, i, x0, T=1.0, steps=1000, paths=10000, seed=20240601, threads=0):
        return self._impl.stoch_exp_mean(i, list(x0), T, steps, paths, seed, threads)


def load(path):
    return Model(_Model.load(str(path)))


def parse(text):
    return Model(_Model.parse(text))
