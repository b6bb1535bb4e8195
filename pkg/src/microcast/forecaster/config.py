from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from microcast.errors import InvalidArgumentError

ARCHITECTURES = ("linear", "scale_mlp")
_DEFAULT_LR = {"linear": 1e-2, "scale_mlp": 1e-3}


@dataclass(frozen=True)
class ModelConfig:
    """Model and optimiser settings.

    ``learning_rate=None`` resolves to the architecture default (1e-2 for
    ``linear``, 1e-3 for ``scale_mlp``). ``band_units`` is the width of each
    per-band encoder in ``scale_mlp``.
    """

    window: int = 8
    horizons: tuple[int, ...] = (1, 2, 3, 4)
    levels: int = 2
    architecture: str = "linear"
    hidden_units: int = 16
    band_units: int = 4
    learning_rate: float | None = None
    momentum: float = 0.9
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 20
    seed: int = 0
    validation_fraction: float = 0.2
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "horizons", tuple(int(h) for h in self.horizons))
        if self.window < 1:
            raise InvalidArgumentError("window must be >= 1")
        if not self.horizons or any(h <= 0 for h in self.horizons):
            raise InvalidArgumentError("horizons must be non-empty and positive")
        if any(b <= a for a, b in zip(self.horizons, self.horizons[1:])):
            raise InvalidArgumentError("horizons must be strictly increasing")
        if self.levels < 1:
            raise InvalidArgumentError("levels must be >= 1")
        if self.architecture not in ARCHITECTURES:
            raise InvalidArgumentError(f"architecture must be one of {ARCHITECTURES}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise InvalidArgumentError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise InvalidArgumentError("batch_size, patience must be >= 1 and max_epochs >= 0")
        if self.hidden_units < 1 or self.band_units < 1:
            raise InvalidArgumentError("hidden_units and band_units must be >= 1")
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", _DEFAULT_LR[self.architecture])
        if self.learning_rate <= 0:
            raise InvalidArgumentError("learning_rate must be positive")

    @property
    def warmup(self) -> int:
        return (1 << self.levels) - 1

    @property
    def history_length(self) -> int:
        """Cells of history a row needs: the window plus decomposition warm-up."""
        return self.window + self.warmup

    def to_dict(self) -> dict:
        d = asdict(self)
        d["horizons"] = list(self.horizons)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **changes) -> ModelConfig:
        return replace(self, **changes)
