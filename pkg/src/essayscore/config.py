"""Pipeline configuration: defaults, file parsing, hashing, search spaces.

Config files are line-oriented ``key = value`` text with ``#`` comments.
Command-line flags mirror the keys and override file values. Every
artifact the pipeline writes embeds the hash of the exact configuration
that produced it, so outputs can be traced and reruns verified.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass
class Config:
    """Every knob of the pipeline, with the best-known defaults."""

    # shared
    seed: int = 0
    min_count: int = 2
    normalize_scores: bool = True
    val_ratio: float = 0.16
    test_ratio: float = 0.20
    # embedding stage
    embed_dim: int = 200
    hidden_dim: int = 100
    window_size: int = 9
    n_corruptions: int = 200
    alpha: float = 0.1
    learning_rate: float = 1e-7
    embed_epochs: int = 5
    # scoring stage
    lstm_dim: int = 10
    layers: int = 1
    bidirectional: bool = False
    dropout: float = 0.5
    peepholes: str = "full"
    epochs: int = 100
    batch_size: int = 32
    patience: int = 25
    rho_rms: float = 0.9
    eps_rms: float = 1e-8
    clip_norm: float = 0.0
    # paths
    data_path: str = "data.tsv"
    range_table: str = ""
    splits_dir: str = "splits"
    models_dir: str = "models"
    reports_dir: str = "reports"
    heatmaps_dir: str = "heatmaps"

    def validate(self):
        if self.min_count < 1:
            raise ConfigError(f"min_count must be >= 1, got {self.min_count}")
        if self.val_ratio < 0 or self.test_ratio < 0 \
                or self.val_ratio + self.test_ratio >= 1.0:
            raise ConfigError(f"split ratios val={self.val_ratio} "
                              f"test={self.test_ratio} leave no training data")
        if self.embed_epochs < 0:
            raise ConfigError(f"embed_epochs must be >= 0, got {self.embed_epochs}")
        self.sswe_hyper().validate()
        self.seq_hyper().validate()

    def sswe_hyper(self):
        from .sswe import SSWEHyper
        return SSWEHyper(embed_dim=self.embed_dim, hidden_dim=self.hidden_dim,
                         window_size=self.window_size,
                         n_corruptions=self.n_corruptions, alpha=self.alpha,
                         learning_rate=self.learning_rate,
                         epochs=self.embed_epochs, seed=self.seed)

    def seq_hyper(self):
        from .lstm import SeqHyper
        return SeqHyper(lstm_dim=self.lstm_dim, layers=self.layers,
                        bidirectional=self.bidirectional, dropout=self.dropout,
                        peepholes=self.peepholes,
                        learning_rate=self.learning_rate, epochs=self.epochs,
                        batch_size=self.batch_size, patience=self.patience,
                        rho_rms=self.rho_rms, eps_rms=self.eps_rms,
                        clip_norm=self.clip_norm, seed=self.seed)

    def split_ratios(self) -> tuple[float, float, float]:
        return (1.0 - self.val_ratio - self.test_ratio,
                self.val_ratio, self.test_ratio)


_FIELDS = {f.name: f.type for f in dataclasses.fields(Config)}


def _coerce(key: str, text: str):
    kind = _FIELDS[key]
    text = text.strip()
    if kind == "bool":
        if text.lower() in ("true", "yes", "1", "on"):
            return True
        if text.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    return text


def parse_config_text(text: str, base: Config | None = None,
                      source: str = "<config>") -> Config:
    """Apply ``key = value`` lines on top of ``base`` (or the defaults)."""
    cfg = dataclasses.replace(base) if base is not None else Config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        setattr(cfg, key, _coerce(key, value))
    return cfg


def load_config(path, base: Config | None = None) -> Config:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base, source=str(path))


def serialize_config(cfg: Config) -> str:
    """Canonical text form: every key, sorted, one per line."""
    lines = [f"{name} = {getattr(cfg, name)}" for name in sorted(_FIELDS)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: Config) -> str:
    """Short stable digest of the full configuration."""
    digest = hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()
    return digest[:16]


def write_config(path, cfg: Config, header: str = ""):
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write(serialize_config(cfg))


@dataclass
class SearchSpace:
    """Random-search ranges over the tunable hyperparameters.

    ``alpha_choices`` (when non-empty) pins alpha to a finite set, which
    the ablation comparison uses; otherwise alpha is drawn uniformly
    from ``alpha_range``. The learning rate is drawn log-uniformly.
    """

    trials: int = 10
    seed: int = 0
    eta_range: tuple[float, float] = (1e-8, 1e-2)
    alpha_range: tuple[float, float] = (0.0, 1.0)
    alpha_choices: tuple[float, ...] = ()
    dropout_range: tuple[float, float] = (0.0, 0.7)
    embed_dim_range: tuple[int, int] = (20, 200)
    hidden_dim_range: tuple[int, int] = (20, 100)
    window_choices: tuple[int, ...] = (5, 7, 9)
    n_corruptions_range: tuple[int, int] = (10, 200)
    lstm_dim_range: tuple[int, int] = (5, 30)

    def validate(self):
        if self.trials < 1:
            raise ConfigError(f"need at least one trial, got {self.trials}")
        for name in ("eta_range", "alpha_range", "dropout_range",
                     "embed_dim_range", "hidden_dim_range",
                     "n_corruptions_range", "lstm_dim_range"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ConfigError(f"{name}: empty range ({lo}, {hi})")
        if self.eta_range[0] <= 0:
            raise ConfigError("learning-rate range must be positive")
        if any(n % 2 == 0 or n < 3 for n in self.window_choices):
            raise ConfigError("window sizes must be odd and >= 3")

    def draw(self, rng, base: Config) -> Config:
        """One trial configuration on top of ``base``."""
        lo, hi = self.eta_range
        eta = float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
        if self.alpha_choices:
            alpha = float(self.alpha_choices[rng.integers(len(self.alpha_choices))])
        else:
            alpha = float(rng.uniform(*self.alpha_range))
        return dataclasses.replace(
            base,
            learning_rate=eta,
            alpha=alpha,
            dropout=float(rng.uniform(*self.dropout_range)),
            embed_dim=int(rng.integers(self.embed_dim_range[0],
                                       self.embed_dim_range[1] + 1)),
            hidden_dim=int(rng.integers(self.hidden_dim_range[0],
                                        self.hidden_dim_range[1] + 1)),
            window_size=int(self.window_choices[
                rng.integers(len(self.window_choices))]),
            n_corruptions=int(rng.integers(self.n_corruptions_range[0],
                                           self.n_corruptions_range[1] + 1)),
            lstm_dim=int(rng.integers(self.lstm_dim_range[0],
                                      self.lstm_dim_range[1] + 1)),
            seed=int(rng.integers(2 ** 31)),
        )
