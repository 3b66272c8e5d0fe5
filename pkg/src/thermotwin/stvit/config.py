"""Forecaster configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class StVitConfig:
    """Architecture and training hyperparameters.

    Defaults follow the reference protocol: hidden width 12, 2 heads, 1
    layer per stream, 24 h in / 24 h out, Adam at 1e-4 with early stopping
    (patience 10, min_delta 5e-4) capped at 200 epochs.
    """
    hidden_dim: int = 12
    num_heads: int = 2
    num_layers: int = 1
    t_in: int = 24
    t_out: int = 24
    batch_size: int = 10
    lr: float = 1e-4
    patience: int = 10
    min_delta: float = 5e-4
    max_epochs: int = 200
    seed: int = 0
    ffn_mult: int = 4
    dtype: str = "float64"   # "float64" (reference) or "float32" (fast path)

    #: input feature counts; 4 static spatial channels + historical UTCI
    n_cell_features: int = 5
    n_meteo_features: int = 7

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")
        for name in ("hidden_dim", "num_heads", "num_layers", "t_in", "t_out",
                     "batch_size", "max_epochs", "ffn_mult"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0 or self.min_delta < 0 or self.patience < 0:
            raise ValueError("bad optimizer settings")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def np_dtype(self):
        import numpy as np
        return np.float64 if self.dtype == "float64" else np.float32

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StVitConfig":
        return cls(**d)
