"""Named prediction methods, cross-validation, and the species ensemble.

A method name encodes three independent choices: neighbor selection
("nn" or "alc", with "2" for a second search under locally fitted
lengthscales), local kernel shape (plain names are isotropic, "sep" is
separable), and global input scaling ("" none, ".s" one random
subsample, ".sb" bootstrapped block subsamples).
"""

import re
import time
from dataclasses import dataclass, replace

import numpy as np

from .design import SearchConfig, predict_surface
from .metrics import mixture_drag, rmse, rmspe, SPECIES_ORDER
from .subsample import SubsampleSpec, bootstrap_lengthscales, choose_m, prescale

_NAME = re.compile(r"^(nn|alc)(sep)?(2)?(\.sb?)?$")

_SUFFIX = {"none": "", "random": ".s", "blhs": ".sb"}
_PRESCALE = {"": "none", ".s": "random", ".sb": "blhs"}


@dataclass(frozen=True)
class MethodSpec:
    """One comparator: selection rule, kernel shape, and input scaling.

    subsample, when given, overrides the automatic block-count and
    bootstrap settings of the scaling stage.
    """

    design_method: str
    kernel_mode: str
    prescale_mode: str = "none"
    n0: int = 6
    n: int = 50
    candidate_limit: int | None = None
    subsample: SubsampleSpec | None = None

    def __post_init__(self):
        if self.design_method not in ("nn", "alc", "alc2"):
            raise ValueError(f"unknown design method {self.design_method!r}")
        if self.kernel_mode not in ("isotropic", "separable"):
            raise ValueError(f"unknown kernel mode {self.kernel_mode!r}")
        if self.prescale_mode not in ("none", "random", "blhs"):
            raise ValueError(f"unknown prescale mode {self.prescale_mode!r}")


def parse_method(name):
    """Method name to MethodSpec; raises on names outside the grammar."""
    m = _NAME.match(name)
    if m is None:
        raise ValueError(f"unknown method name {name!r}")
    base, sep, two, suffix = m.groups()
    if two and base != "alc":
        raise ValueError(f"unknown method name {name!r}")
    return MethodSpec(
        design_method=base + (two or ""),
        kernel_mode="separable" if sep else "isotropic",
        prescale_mode=_PRESCALE[suffix or ""],
    )


def format_method(spec):
    """Canonical name of a MethodSpec; inverse of parse_method."""
    base = spec.design_method
    if spec.kernel_mode == "separable":
        base = base.replace("alc", "alcsep").replace("nn", "nnsep")
    return base + _SUFFIX[spec.prescale_mode]


ALL_METHODS = tuple(
    core + suffix
    for core in ("nn", "nnsep", "alc", "alcsep", "alc2", "alcsep2")
    for suffix in ("", ".s", ".sb")
)


@dataclass(frozen=True)
class FitOutcome:
    """What fit_predict returns: predictions plus stage diagnostics."""

    method: str
    pred: object
    global_scale: object
    stage_seconds: dict


def estimate_global_scale(X, Y, spec, seed=None):
    """The scaling stage of a method on its own: lengthscales or None.

    spec is a MethodSpec; prescale_mode "none" returns None without
    touching the data.
    """
    if spec.prescale_mode == "none":
        return None
    sub = spec.subsample
    if sub is None:
        mode = "blhs" if spec.prescale_mode == "blhs" else "random"
        sub = SubsampleSpec(
            m=choose_m(len(X), X.shape[1]),
            bootstrap_count=30 if mode == "blhs" else 1,
            mode=mode,
        )
    if sub.seed is None:
        sub = replace(sub, seed=seed)
    return bootstrap_lengthscales(np.asarray(X, dtype=float), Y, sub)


def fit_predict(X, Y, X_test, method, threads=1, seed=None, global_scale=None):
    """Run one named method end to end and predict at X_test.

    method is a name or a MethodSpec. global_scale short-circuits the
    scaling stage with precomputed lengthscales (useful for sharing one
    estimate across comparators, or for invariance checks).
    """
    spec = parse_method(method) if isinstance(method, str) else method
    X = np.asarray(X, dtype=float)
    X_test = np.asarray(X_test, dtype=float)

    tic = time.perf_counter()
    gs = global_scale
    if gs is None and spec.prescale_mode != "none":
        gs = estimate_global_scale(X, Y, spec, seed=seed)
    scale_seconds = time.perf_counter() - tic

    if gs is not None:
        X = prescale(X, gs)
        X_test = prescale(X_test, gs)

    cfg = SearchConfig(
        n0=spec.n0,
        n=spec.n,
        candidate_limit=spec.candidate_limit,
        method="nn" if spec.design_method == "nn" else "alc",
        second_stage=spec.design_method == "alc2",
        kernel_mode=spec.kernel_mode,
    )
    pred = predict_surface(X, Y, X_test, cfg, threads=threads)
    return FitOutcome(
        method=format_method(spec),
        pred=pred,
        global_scale=gs,
        stage_seconds={"scale": scale_seconds, "predict": pred.seconds},
    )


def _fold_indices(n, folds, rng):
    if not 2 <= folds <= n:
        raise ValueError("folds must be between 2 and the number of rows")
    return np.array_split(rng.permutation(n), folds)


def cv_experiment(X, Y, method, folds=5, seed=None, threads=1):
    """Seeded disjoint-fold cross-validation of one method.

    Returns per-fold rows (fold, n_test, rmse, rmspe, seconds) and
    quantile summaries of both error metrics. RMSPE is NaN on folds whose
    truths come too close to zero for relative error.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    ss = np.random.SeedSequence(seed)
    split_ss, *fit_ss = ss.spawn(folds + 1)
    parts = _fold_indices(len(X), folds, np.random.default_rng(split_ss))

    rows = []
    for i, test_idx in enumerate(parts):
        train_idx = np.setdiff1d(np.arange(len(X)), test_idx)
        out = fit_predict(
            X[train_idx], Y[train_idx], X[test_idx], method,
            threads=threads, seed=int(fit_ss[i].generate_state(1)[0]))
        truth = Y[test_idx]
        try:
            rel = rmspe(out.pred.mean, truth)
        except ValueError:
            rel = float("nan")
        rows.append({
            "fold": i,
            "n_test": int(test_idx.size),
            "rmse": rmse(out.pred.mean, truth),
            "rmspe": rel,
            "seconds": out.pred.seconds,
        })

    qs = (0.05, 0.25, 0.5, 0.75, 0.95)
    summary = {}
    for key in ("rmse", "rmspe"):
        vals = np.array([r[key] for r in rows])
        summary[key] = {q: float(np.nanquantile(vals, q)) for q in qs}
    name = method if isinstance(method, str) else format_method(method)
    return {"method": name, "folds": rows, "summary": summary}


def ensemble_species(means, fractions, masses=None):
    """Blend six per-species predictions into a mixture response.

    means is a (6, n) array in the canonical species order, or a mapping
    from species name to length-n vector covering all six species.
    fractions are the mixture's mole fractions in the same order.
    """
    if isinstance(means, dict):
        missing = set(SPECIES_ORDER) - set(means)
        if missing:
            raise KeyError(f"missing species {sorted(missing)}")
        extra = set(means) - set(SPECIES_ORDER)
        if extra:
            raise KeyError(f"unknown species {sorted(extra)}")
        means = np.vstack([np.asarray(means[s], dtype=float).reshape(1, -1)
                           for s in SPECIES_ORDER])
    else:
        means = np.asarray(means, dtype=float)
    if means.ndim != 2 or means.shape[0] != len(SPECIES_ORDER):
        raise ValueError("means must have one row per species")
    return mixture_drag(means.T, fractions, masses=masses)
