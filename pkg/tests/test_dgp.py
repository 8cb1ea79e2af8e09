import json
from dataclasses import replace

import numpy as np
import pytest

from ncodid.dataset import build_nco, validate_schema
from ncodid.dgp import (
    ADDITIVE,
    PROPENSITY_CLIP,
    QQ_MODE,
    VIOLATED,
    DgpConfig,
    DgpError,
    SyntheticUnit,
    calibrate_effect,
    equi_confounding_gap,
    generate,
    population_atet,
    true_atet,
)
from ncodid.estimators import atet_unmatched


def arm_means(ds):
    a = np.array([r.treatment for r in ds.records])
    y = np.array([r.outcome for r in ds.records], dtype=float)
    n = np.array([r.citation_counts[1] for r in ds.records], dtype=float)
    return a, y, n


def test_determinism():
    cfg = DgpConfig(n_units=300, seed=4)
    assert generate(cfg) == generate(cfg)
    assert generate(cfg)[0] != generate(replace(cfg, seed=5))[0]


def test_consistency_and_positivity():
    _, units = generate(DgpConfig(n_units=2000, seed=1, coef_U_to_A=6.0))
    for u in units:
        assert u.record.outcome == (u.y1 if u.record.treatment else u.y0)
        assert PROPENSITY_CLIP[0] <= u.propensity <= PROPENSITY_CLIP[1]
    props = [u.propensity for u in units]
    assert min(props) == PROPENSITY_CLIP[0] and max(props) == PROPENSITY_CLIP[1]


@pytest.mark.parametrize("mode", [ADDITIVE, VIOLATED, QQ_MODE])
def test_nco_does_not_respond_to_treatment(mode):
    cfg = DgpConfig(n_units=500, seed=3, equi_confounding_mode=mode)
    ds, _ = generate(cfg)
    flipped, _ = generate(cfg, treatment=[not r.treatment for r in ds.records])
    assert all(r.treatment != f.treatment for r, f in zip(ds.records, flipped.records))
    assert [r.citation_counts for r in ds.records] == [f.citation_counts for f in flipped.records]


def test_treatment_override_shape():
    with pytest.raises(DgpError):
        generate(DgpConfig(n_units=10), treatment=[True] * 9)


def test_poisson_counts_nest():
    ds, units = generate(DgpConfig(n_units=400, seed=2, equi_confounding_mode=QQ_MODE))
    for r in ds.records:
        c = r.citation_counts
        assert 0 <= c[1] <= c[2] <= c[3]
    assert all(u.w is not None for u in units)


def test_binary_nco_written_to_every_window():
    ds, _ = generate(DgpConfig(n_units=200, seed=2))
    for r in ds.records:
        assert r.citation_counts[1] == r.citation_counts[2] == r.citation_counts[3] in (0, 1)


def test_equi_confounding_switch():
    assert abs(equi_confounding_gap(DgpConfig(equi_confounding_mode=ADDITIVE))) < 0.01
    assert abs(equi_confounding_gap(DgpConfig(equi_confounding_mode=VIOLATED))) > 0.05


def test_null_model_unadjusted_near_zero():
    cfg = DgpConfig(n_units=20000, seed=8, treatment_effect=0.0, coef_U_to_A=0.0, coef_U_to_Y=0.0,
                    coef_C_to_A=0.0)
    ds, _ = generate(cfg)
    a, y, _ = arm_means(ds)
    se = np.sqrt(y[a].var() / a.sum() + y[~a].var() / (~a).sum())
    assert abs(atet_unmatched(ds).atet) < 3 * se


def test_confounding_biases_unadjusted_but_not_did():
    # no effect, shared latent confounding: the naive contrast is biased, the NCO contrast is not
    cfg = DgpConfig(n_units=2000, treatment_effect=0.0, coef_C_to_A=0.0, coef_C_to_Y=0.0)
    naive, did = [], []
    for r in range(200):
        ds, _ = generate(replace(cfg, seed=r))
        a, y, n = arm_means(ds)
        naive.append(y[a].mean() - y[~a].mean())
        did.append((y[a].mean() - n[a].mean()) - (y[~a].mean() - n[~a].mean()))
    assert np.mean(naive) > 0.1
    assert abs(np.mean(did)) < 3 * np.std(did) / np.sqrt(200)


def test_true_atet_trivial_cases():
    ds, units = generate(DgpConfig(n_units=50, seed=0))
    same = [replace(u, y1=u.y0) for u in units]
    assert true_atet(same) == 0
    ones = [replace(u, y1=True, y0=False) for u in units]
    assert true_atet(ones) == 1.0
    with pytest.raises(DgpError):
        true_atet([u for u in units if not u.record.treatment])


def test_population_atet_against_quadrature():
    # one covariate, no latent in Y: integrate over (C, U) on a Gauss-Hermite grid
    cfg = DgpConfig(covariate_dims=1, coef_U_to_Y=0.0, coef_U_to_A=1.0)
    nodes, weights = np.polynomial.hermite_e.hermegauss(60)
    weights = weights / weights.sum()
    c, u = np.meshgrid(nodes, nodes, indexing="ij")
    w = np.outer(weights, weights)
    logit = lambda z: 1 / (1 + np.exp(-z))  # noqa: E731
    e = np.clip(logit(cfg.intercept_A + cfg.coef_C_to_A * c + cfg.coef_U_to_A * u), *PROPENSITY_CLIP)
    idx = cfg.intercept_Y + cfg.coef_C_to_Y * c
    want = np.sum(w * e * (logit(idx + cfg.treatment_effect) - logit(idx))) / np.sum(w * e)
    assert population_atet(cfg) == pytest.approx(want, abs=1e-3)


def test_calibrate_effect_hits_target():
    cfg = calibrate_effect(DgpConfig(), 0.1, n_draws=100_000)
    assert population_atet(cfg, n_draws=100_000) == pytest.approx(0.1, abs=1e-8)
    assert cfg.treatment_effect > 0


def test_sample_truth_tracks_population():
    cfg = DgpConfig(n_units=20000, seed=6)
    _, units = generate(cfg)
    assert true_atet(units) == pytest.approx(population_atet(cfg, n_draws=200_000), abs=0.02)


def test_config_validation():
    with pytest.raises(DgpError):
        DgpConfig(n_units=0)
    with pytest.raises(DgpError):
        DgpConfig(equi_confounding_mode="other")
    with pytest.raises(DgpError):
        DgpConfig(coef_U_to_N=0.2)  # additive needs equal latent coefficients
    with pytest.raises(DgpError):
        DgpConfig(equi_confounding_mode=VIOLATED, coef_U_to_N=1.5)
    with pytest.raises(DgpError):
        DgpConfig(equi_confounding_mode=QQ_MODE, nco_kind="binary")
    with pytest.raises(DgpError):
        DgpConfig.from_dict({"n_units": 5, "bogus": 1})
    with pytest.raises(DgpError):
        generate(DgpConfig(coef_C_to_A=[1.0, 2.0]))


def test_config_files(tmp_path):
    cfg = DgpConfig(n_units=123, seed=9, equi_confounding_mode=VIOLATED, years=(2020, 2021))
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert DgpConfig.from_file(p) == cfg
    t = tmp_path / "cfg.toml"
    t.write_text('[dgp]\nn_units = 123\nseed = 9\nequi_confounding_mode = "violated"\nyears = [2020, 2021]\n')
    assert DgpConfig.from_file(t) == cfg


def test_dataset_feeds_pipeline():
    ds, units = generate(DgpConfig(n_units=300, seed=1))
    assert isinstance(units[0], SyntheticUnit)
    assert validate_schema(ds).ok
    spec, annotated = build_nco(ds, 1, 0.5)
    assert len(annotated) == len(ds)
