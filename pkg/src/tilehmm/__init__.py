__all__ = [
    "model",
    "simulate",
    "inference",
    "ecm",
    "mcmc",
    "regions",
    "data_loader",
    "writers",
    "config",
]
