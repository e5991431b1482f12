from __future__ import annotations

import json
from pathlib import Path

import pytest

from src.tilehmm.config import RunConfig, load_hyperpriors
from src.tilehmm.errors import ConfigError
from src.tilehmm.model import Mode, default_hyperpriors


def test_defaults_validate_and_build_options():
    config = RunConfig(input_path=Path("probes.tsv"), threads=4, seed=7).validate()
    variant = config.model_variant(1, 0)
    assert variant.mode is Mode.POOLED
    assert config.ecm_options(variant).workers == 4
    mcmc = config.mcmc_options(variant)
    assert (mcmc.n_iter, mcmc.burn_in, mcmc.seed) == (10_500, 500, 7)


def test_all_problems_are_reported_together():
    with pytest.raises(ConfigError) as info:
        RunConfig(input_path=Path("x"), algorithm="gibbs", cutoff=1.5, burn_in=20, n_iter=10).validate()
    message = str(info.value)
    assert "algorithm" in message and "cutoff" in message and "burn-in" in message


def test_hyperprior_overrides(tmp_path):
    path = tmp_path / "hyper.json"
    path.write_text(json.dumps({"p0_prior": [2, 50], "pi_prior": [1, 99]}))
    hyper = load_hyperpriors(path, default_hyperpriors(35))
    assert hyper.p0_prior == (2.0, 50.0) and hyper.lambda_prior == (1.1, 350.0)
    assert load_hyperpriors(None, hyper) is hyper


@pytest.mark.parametrize("content", ["{oops", "[1, 2]", '{"p9_prior": [1, 1]}', '{"p0_prior": [0, 1]}'])
def test_bad_hyperprior_files(tmp_path, content):
    path = tmp_path / "hyper.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_hyperpriors(path, default_hyperpriors())
