"""Prediction-quality metrics and the species-mixture drag combiner."""

import numpy as np
from dataclasses import dataclass
from scipy import linalg

from .gp import chol_psd

# Atmospheric constituents in their fixed column order, with particle masses
# in unified atomic mass units (CIAAW standard atomic weights; He from the
# isotopic standard). Override the masses where a different table is needed.
SPECIES_ORDER = ("O", "O2", "N", "N2", "He", "H")
PARTICLE_MASSES_AMU = (15.999, 31.998, 14.007, 28.014, 4.002602, 1.008)


@dataclass(frozen=True)
class SpeciesMixture:
    """Mole fractions and particle masses for the six-species atmosphere.

    Fractions are nonnegative with a positive sum, ordered as
    SPECIES_ORDER; masses are positive, in atomic mass units.
    """

    mole_fractions: np.ndarray
    particle_masses: np.ndarray = PARTICLE_MASSES_AMU

    def __post_init__(self):
        chi = np.asarray(self.mole_fractions, dtype=float).reshape(-1)
        mass = np.asarray(self.particle_masses, dtype=float).reshape(-1)
        if chi.size != len(SPECIES_ORDER) or mass.size != len(SPECIES_ORDER):
            raise ValueError(f"expected {len(SPECIES_ORDER)} species entries")
        if np.any(chi < 0) or not np.all(np.isfinite(chi)) or chi.sum() <= 0:
            raise ValueError("mole fractions must be nonnegative with a "
                             "positive sum")
        if np.any(mass <= 0) or not np.all(np.isfinite(mass)):
            raise ValueError("particle masses must be positive")
        object.__setattr__(self, "mole_fractions", chi)
        object.__setattr__(self, "particle_masses", mass)


def mixture_drag(per_species, mix, masses=None):
    """Mass-weighted combination of per-species drag coefficients.

    Weights are mole fraction times particle mass, normalized; the result
    is a convex combination of the six inputs. per_species is a 6-vector or
    an (n, 6) matrix of row-wise coefficients; mix is a SpeciesMixture, a
    6-vector of mole fractions (masses defaulting to PARTICLE_MASSES_AMU),
    or an (n, 6) matrix of row-wise fractions.
    """
    cd = np.asarray(per_species, dtype=float)
    if isinstance(mix, SpeciesMixture):
        chi = mix.mole_fractions
        mass = mix.particle_masses
    else:
        chi = np.asarray(mix, dtype=float)
        mass = np.asarray(
            PARTICLE_MASSES_AMU if masses is None else masses, dtype=float)
    k = len(SPECIES_ORDER)
    if cd.shape[-1] != k or chi.shape[-1] != k or mass.shape[-1] != k:
        raise ValueError(f"expected {k} species entries")
    if np.any(chi < 0) or not np.all(np.isfinite(chi)):
        raise ValueError("mole fractions must be nonnegative and finite")
    w = chi * mass
    total = w.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ValueError("mixture weights sum to zero")
    # normalize before combining: a pure mixture then has one weight equal
    # to 1.0 exactly and passes its species column through bitwise
    return (cd * (w / total)).sum(axis=-1)


def rmse(pred, truth):
    """Root mean squared error."""
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def rmspe(pred, truth):
    """Root mean squared percentage error, in percent.

    Truth entries smaller than 1e-12 in magnitude make percentages
    meaningless, so they raise rather than being skipped silently.
    """
    pred = np.asarray(pred, dtype=float).reshape(-1)
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"length mismatch: {pred.size} vs {truth.size}")
    if np.any(np.abs(truth) < 1e-12):
        raise ValueError("truth contains entries too close to zero for "
                         "percentage error")
    return float(np.sqrt(np.mean((100.0 * (pred - truth) / truth) ** 2)))


def mahalanobis(truth, mean, cov):
    """Covariance-weighted distance between truth and a predictive mean.

    Solves through the Cholesky factor of cov (with the shared jitter
    escalation policy) rather than forming an inverse.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    cov = np.asarray(cov, dtype=float)
    if truth.size != mean.size or cov.shape != (truth.size, truth.size):
        raise ValueError("truth, mean, and cov dimensions do not agree")
    L = chol_psd(cov)
    u = linalg.solve_triangular(L, truth - mean, lower=True)
    return float(np.sqrt(u @ u))


def proper_score(truth, mean, var):
    """Mean of -(squared error)/variance - log variance; larger is better."""
    truth = np.asarray(truth, dtype=float).reshape(-1)
    mean = np.asarray(mean, dtype=float).reshape(-1)
    var = np.asarray(var, dtype=float).reshape(-1)
    if not truth.size == mean.size == var.size:
        raise ValueError("truth, mean, and var lengths do not agree")
    if np.any(var <= 0) or not np.all(np.isfinite(var)):
        raise ValueError("variances must be positive and finite")
    return float(np.mean(-((mean - truth) ** 2) / var - np.log(var)))
