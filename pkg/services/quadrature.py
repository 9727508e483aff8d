import logging
import math
from functools import lru_cache
from typing import Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from config import Config
from exceptions import ParameterDomainError
from models import QuadratureRule

logger = logging.getLogger(__name__)

_MAX_LEVELS = 2000


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def composite_gauss(edges: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre with n nodes on every panel [edges[i], edges[i+1]]."""
    x, w = gauss_legendre(n)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def graded_edges(levels: int, phase_rate: float = 0.0, kappa: float = 1.0) -> np.ndarray:
    """Dyadic panel edges 0, 2^-levels, ..., 1/2, 1, each split against oscillation.

    phase_rate bounds d/d(x^kappa) of the total phase of the integrand, so a
    panel [x0, x1] is cut into pieces of at most two radians.
    """
    dyadic = np.concatenate(([0.0], 2.0 ** -np.arange(levels, -1, -1, dtype=float)))
    edges = [0.0]
    for x0, x1 in zip(dyadic[:-1], dyadic[1:]):
        phase = phase_rate * (x1 ** kappa - x0 ** kappa)
        pieces = max(1, int(math.ceil(phase / 2.0)))
        edges.extend(np.linspace(x0, x1, pieces + 1)[1:])
    return np.asarray(edges)


def graded_rule(
    exponent: float,
    phase_rate: float = 0.0,
    kappa: float = 1.0,
    tol: float = Config.QUAD_TOL,
    nodes: int = Config.QUAD_NODES,
    min_levels: int = Config.QUAD_PANELS,
) -> QuadratureRule:
    """Rule on (0, 1) for integrands behaving like x^exponent near 0 (exponent > -1)."""
    if not exponent > -1.0:
        raise ParameterDomainError(f"integrand x^{exponent} is not integrable at 0")
    levels = int(math.ceil(math.log2(1.0 / tol) / (exponent + 1.0))) + 2
    levels = min(max(min_levels, levels), _MAX_LEVELS)

    x, w = composite_gauss(graded_edges(levels, phase_rate, kappa), nodes)
    fine_x, fine_w = composite_gauss(graded_edges(2 * levels, 2.0 * phase_rate, kappa), nodes + 8)
    logger.debug(f"Graded rule: {levels} dyadic levels, {x.size} nodes (exponent {exponent:.3f})")
    return QuadratureRule(nodes=x, weights=w, levels=levels, tol=tol, fine_nodes=fine_x, fine_weights=fine_w)


def uniform_rule(a: float, b: float, panels: int, nodes: int = Config.QUAD_NODES) -> Tuple[np.ndarray, np.ndarray]:
    return composite_gauss(np.linspace(a, b, panels + 1), nodes)
