"""Method-name grammar, end-to-end fits, cross-validation, ensembling."""

import numpy as np
import pytest

from localgp import (
    ALL_METHODS,
    MethodSpec,
    SubsampleSpec,
    cv_experiment,
    ensemble_species,
    estimate_global_scale,
    fit_predict,
    format_method,
    parse_method,
    prescale,
)
from localgp.benchmarks import lhs_design


def _data(seed=0, n=300, p=2):
    X = lhs_design(n, p, seed=seed)
    Y = np.sin(5 * X[:, 0]) + np.cos(3 * X[:, 1]) * X[:, 0]
    return X, Y


class TestMethodGrammar:
    def test_all_names_round_trip(self):
        assert len(ALL_METHODS) == 18
        for name in ALL_METHODS:
            assert format_method(parse_method(name)) == name

    def test_fields_decode_correctly(self):
        spec = parse_method("alcsep2.sb")
        assert spec.design_method == "alc2"
        assert spec.kernel_mode == "separable"
        assert spec.prescale_mode == "blhs"
        spec = parse_method("nn.s")
        assert spec.design_method == "nn"
        assert spec.kernel_mode == "isotropic"
        assert spec.prescale_mode == "random"
        assert parse_method("alc").prescale_mode == "none"

    def test_bad_names_rejected(self):
        for bad in ("nn2", "nnsep2", "alc3", "alc.b", "alc.sbb", "sep",
                    "ALC", "", "alc2sep"):
            with pytest.raises(ValueError):
                parse_method(bad)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            MethodSpec(design_method="knn", kernel_mode="isotropic")
        with pytest.raises(ValueError):
            MethodSpec(design_method="nn", kernel_mode="cubic")
        with pytest.raises(ValueError):
            MethodSpec(design_method="nn", kernel_mode="isotropic",
                       prescale_mode="zscore")


class TestFitPredict:
    def test_every_method_runs_small(self):
        X, Y = _data(n=240)
        Xt, truth = _data(seed=9, n=12)
        for name in ALL_METHODS:
            spec = parse_method(name)
            spec = MethodSpec(
                design_method=spec.design_method,
                kernel_mode=spec.kernel_mode,
                prescale_mode=spec.prescale_mode,
                n0=4, n=12,
                subsample=SubsampleSpec(m=2, bootstrap_count=3, seed=0),
            )
            out = fit_predict(X, Y, Xt, spec, seed=0)
            assert out.method == name
            assert not out.pred.errors, name
            assert np.all(np.isfinite(out.pred.mean)), name
            assert out.pred.mean.size == 12
            if spec.prescale_mode == "none":
                assert out.global_scale is None
            else:
                assert out.global_scale.lengthscales.shape == (2,)

    def test_nn_interpolates_training_rows(self):
        X, Y = _data(1)
        out = fit_predict(X, Y, X[:15],
                          MethodSpec(design_method="nn",
                                     kernel_mode="isotropic", n0=4, n=20))
        # the local fit keeps a small nugget-free interpolant around each
        # training row, so error is dominated by the MLE's smoothing
        assert np.sqrt(np.mean((out.pred.mean - Y[:15]) ** 2)) < 1e-3

    def test_prescale_invariance(self):
        """Feeding prescaled inputs equals injecting the scale estimate."""
        X, Y = _data(2)
        Xt = lhs_design(10, 2, seed=77)
        spec = MethodSpec(design_method="alc", kernel_mode="separable",
                          prescale_mode="blhs", n0=4, n=15,
                          subsample=SubsampleSpec(m=2, bootstrap_count=3,
                                                  seed=5))
        gs = estimate_global_scale(X, Y, spec, seed=5)
        via_injection = fit_predict(X, Y, Xt, spec, global_scale=gs)
        plain = MethodSpec(design_method="alc", kernel_mode="separable",
                           n0=4, n=15)
        via_inputs = fit_predict(prescale(X, gs), Y, prescale(Xt, gs), plain)
        np.testing.assert_allclose(via_injection.pred.mean,
                                   via_inputs.pred.mean, atol=1e-10)
        np.testing.assert_allclose(via_injection.pred.scale2,
                                   via_inputs.pred.scale2, atol=1e-10)

    def test_seeded_scale_stage_deterministic(self):
        X, Y = _data(3)
        spec = parse_method("alc.sb")
        spec = MethodSpec(design_method=spec.design_method,
                          kernel_mode=spec.kernel_mode,
                          prescale_mode=spec.prescale_mode, n0=4, n=12,
                          subsample=SubsampleSpec(m=2, bootstrap_count=3))
        a = estimate_global_scale(X, Y, spec, seed=123)
        b = estimate_global_scale(X, Y, spec, seed=123)
        np.testing.assert_array_equal(a.provenance, b.provenance)

    def test_none_mode_returns_none(self):
        X, Y = _data(4)
        assert estimate_global_scale(X, Y, parse_method("alc")) is None


class TestCvExperiment:
    def test_fold_structure_and_metrics(self):
        X, Y = _data(5, n=120)
        spec = MethodSpec(design_method="nn", kernel_mode="isotropic",
                          n0=4, n=10)
        out = cv_experiment(X, Y, spec, folds=4, seed=0)
        assert len(out["folds"]) == 4
        assert sum(r["n_test"] for r in out["folds"]) == 120
        for r in out["folds"]:
            assert np.isfinite(r["rmse"])
        assert set(out["summary"]) == {"rmse", "rmspe"}
        med = out["summary"]["rmse"][0.5]
        assert np.isfinite(med) and med >= 0

    def test_seeded_determinism(self):
        X, Y = _data(6, n=100)
        spec = MethodSpec(design_method="alc", kernel_mode="isotropic",
                          n0=4, n=10)
        a = cv_experiment(X, Y, spec, folds=3, seed=7)
        b = cv_experiment(X, Y, spec, folds=3, seed=7)
        assert [r["rmse"] for r in a["folds"]] == \
            [r["rmse"] for r in b["folds"]]

    def test_fold_count_validated(self):
        X, Y = _data(7, n=50)
        with pytest.raises(ValueError):
            cv_experiment(X, Y, parse_method("nn"), folds=1)
        with pytest.raises(ValueError):
            cv_experiment(X, Y, parse_method("nn"), folds=51)


class TestEnsembleSpecies:
    def test_pure_species_selects_one_row(self):
        rng = np.random.default_rng(8)
        means = rng.uniform(1, 4, size=(6, 10))
        chi = np.zeros(6)
        chi[4] = 1.0  # pure He
        np.testing.assert_allclose(ensemble_species(means, chi), means[4],
                                   atol=1e-15)

    def test_identical_predictors_pass_through(self):
        base = np.linspace(1, 2, 7)
        means = np.tile(base, (6, 1))
        chi = np.array([0.3, 0.1, 0.2, 0.2, 0.1, 0.1])
        np.testing.assert_allclose(ensemble_species(means, chi), base,
                                   rtol=1e-12)

    def test_matches_direct_weighted_mean(self):
        from localgp import PARTICLE_MASSES_AMU
        rng = np.random.default_rng(9)
        means = rng.uniform(1, 4, size=(6, 5))
        chi = rng.uniform(0.05, 1.0, size=6)
        w = chi * np.asarray(PARTICLE_MASSES_AMU)
        want = (means * w[:, None]).sum(axis=0) / w.sum()
        np.testing.assert_allclose(ensemble_species(means, chi), want,
                                   rtol=1e-12)

    def test_dict_and_array_forms_agree(self):
        from localgp import SPECIES_ORDER
        rng = np.random.default_rng(10)
        means = rng.uniform(1, 4, size=(6, 4))
        chi = rng.uniform(0.1, 1.0, size=6)
        as_dict = {s: means[i] for i, s in enumerate(SPECIES_ORDER)}
        np.testing.assert_allclose(ensemble_species(as_dict, chi),
                                   ensemble_species(means, chi), atol=1e-15)

    def test_species_key_validation(self):
        means = {s: np.ones(3) for s in ("O", "O2", "N", "N2", "He")}
        with pytest.raises(KeyError, match="missing"):
            ensemble_species(means, np.ones(6))
        means["H"] = np.ones(3)
        means["Ar"] = np.ones(3)
        with pytest.raises(KeyError, match="unknown"):
            ensemble_species(means, np.ones(6))
        with pytest.raises(ValueError):
            ensemble_species(np.ones((5, 3)), np.ones(6))
