from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .ecm import EcmOptions
from .errors import ConfigError, ParameterError
from .mcmc import McmcOptions
from .model import Hyperpriors, ModelVariant

logger = logging.getLogger(__name__)

ALGORITHMS = ("ecm", "mcmc", "both")
VARIANTS = ("auto", "hierarchical", "pooled")


@dataclass(frozen=True)
class RunConfig:
    """Settings of one ``fit``/``call`` run, assembled from CLI flags and environment."""

    input_path: Path
    out_dir: Path = Path("outputs")
    algorithm: str = "ecm"
    variant: str = "auto"
    hyperpriors_path: Path | None = None
    cutoff: float = 0.9
    min_probes: int = 1
    probe_length: int = 25
    tol: float = 1e-3
    max_iter: int = 200
    n_iter: int = 10_500
    burn_in: int = 500
    thin: int = 1
    chains: int = 1
    seed: int = 0
    threads: int = 1
    every: int = 1

    def validate(self) -> RunConfig:
        problems = []
        if self.algorithm not in ALGORITHMS:
            problems.append(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.variant not in VARIANTS:
            problems.append(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.cutoff < 1.0:
            problems.append(f"cutoff must lie in (0, 1), got {self.cutoff}")
        if not self.tol > 0:
            problems.append(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 0:
            problems.append(f"max-iter must be >= 0, got {self.max_iter}")
        if not 0 <= self.burn_in < self.n_iter:
            problems.append(f"need 0 <= burn-in < n-iter, got {self.burn_in}, {self.n_iter}")
        for name in ("min_probes", "probe_length", "thin", "chains", "threads", "every"):
            if getattr(self, name) < 1:
                problems.append(f"{name.replace('_', '-')} must be >= 1, got {getattr(self, name)}")
        if self.seed < 0:
            problems.append(f"seed must be >= 0, got {self.seed}")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def model_variant(self, n_t: int, n_c: int) -> ModelVariant:
        return ModelVariant.from_name(self.variant, n_t, n_c)

    def ecm_options(self, variant: ModelVariant) -> EcmOptions:
        return EcmOptions(tol=self.tol, max_iter=self.max_iter, variant=variant, workers=self.threads)

    def mcmc_options(self, variant: ModelVariant) -> McmcOptions:
        return McmcOptions(
            n_iter=self.n_iter,
            burn_in=self.burn_in,
            thin=self.thin,
            seed=self.seed,
            variant=variant,
        )


def load_hyperpriors(path: str | Path | None, base: Hyperpriors) -> Hyperpriors:
    """Apply overrides from a JSON object mapping field names to two-element lists."""
    if path is None:
        return base
    try:
        with open(path) as f:
            overrides = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: expected a JSON object of hyperprior pairs")
    try:
        hyper = base.with_overrides(overrides)
    except (ParameterError, TypeError) as e:
        raise ConfigError(f"{path}: {e}") from e
    logger.info("Hyperprior overrides from %s: %s", path, sorted(overrides))
    return hyper
