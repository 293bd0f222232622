"""Run configuration: every tunable of the pipeline in one serializable record."""

import dataclasses
import json
from dataclasses import dataclass, field

_UINT64_MAX = 2**64 - 1


@dataclass
class RunConfig:
    """All knobs of the destriping pipeline.

    Defaults are chosen for desk-scale volumes; ``lambda_z`` is smaller than
    the in-plane penalties because axial sampling in light-sheet stacks is
    typically much coarser than lateral sampling.
    """

    annulus_width_px: float = 1.0
    mask_threshold: float = 1e-3
    wedge_half_angle_deg: float = 10.0
    dc_guard_radius_px: int = 3
    neighbors_N: int = 32
    layers_L: int = 2
    hidden_dims: list = field(default_factory=lambda: [16, 16])
    unroll_K: int = 3
    loss_beta: float = 1.0
    lambda_x: float = 1.0
    lambda_y: float = 1.0
    lambda_z: float = 0.1
    train_epochs: int = 300
    learning_rate: float = 1e-3
    rng_seed: int = 42
    tie_unroll_weights: bool = False
    resample_neighbors_each_epoch: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        _require(self.annulus_width_px > 0, "annulus_width_px", "must be > 0")
        _require(0.0 < self.mask_threshold < 1.0, "mask_threshold", "must be in (0, 1)")
        _require(
            0.0 < self.wedge_half_angle_deg < 90.0,
            "wedge_half_angle_deg",
            "must be in (0, 90)",
        )
        _require(
            isinstance(self.dc_guard_radius_px, int) and self.dc_guard_radius_px >= 0,
            "dc_guard_radius_px",
            "must be a nonnegative integer",
        )
        _require(
            isinstance(self.neighbors_N, int) and self.neighbors_N > 0,
            "neighbors_N",
            "must be a positive integer",
        )
        _require(
            isinstance(self.layers_L, int) and self.layers_L > 0,
            "layers_L",
            "must be a positive integer",
        )
        _require(
            isinstance(self.hidden_dims, list)
            and all(isinstance(d, int) and d > 0 for d in self.hidden_dims),
            "hidden_dims",
            "must be a list of positive integers",
        )
        # layer l of the network consumes hidden_dims[l-1]; extra entries are ignored
        _require(
            len(self.hidden_dims) >= self.layers_L - 1,
            "hidden_dims",
            f"needs at least layers_L-1 = {self.layers_L - 1} entries",
        )
        _require(
            isinstance(self.unroll_K, int) and self.unroll_K > 0,
            "unroll_K",
            "must be a positive integer",
        )
        _require(self.loss_beta >= 0, "loss_beta", "must be >= 0")
        for name in ("lambda_x", "lambda_y", "lambda_z"):
            _require(getattr(self, name) > 0, name, "must be > 0")
        _require(
            isinstance(self.train_epochs, int) and self.train_epochs > 0,
            "train_epochs",
            "must be a positive integer",
        )
        _require(self.learning_rate > 0, "learning_rate", "must be > 0")
        _require(
            isinstance(self.rng_seed, int) and 0 <= self.rng_seed <= _UINT64_MAX,
            "rng_seed",
            "must be a 64-bit unsigned integer",
        )
        for name in ("tie_unroll_weights", "resample_neighbors_each_epoch"):
            _require(isinstance(getattr(self, name), bool), name, "must be a boolean")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)


def _require(cond, key, msg):
    if not cond:
        raise ValueError(f"config field '{key}' {msg}")


def load_config(path):
    """Read a RunConfig from a JSON file; absent keys take their defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must contain a JSON object")
    return RunConfig.from_dict(data)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
