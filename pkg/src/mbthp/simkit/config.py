"""Experiment description and CSV result rows."""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import yaml

from mbthp.channel import SystemGeometry
from mbthp.errors import ConfigInvalid
from mbthp.modem import get_constellation

__all__ = ["ExperimentConfig", "ResultRow", "PrecoderSpec", "parse_precoder",
           "load_config", "parse_ebno_range", "CSV_HEADER"]

METRICS = ("ber", "sumrate", "covariance")
CHANNEL_MODELS = ("rayleigh", "identity")


@dataclass(frozen=True)
class PrecoderSpec:
    name: str
    structure: str  # "cTHP", "dTHP" or "linear"
    mode: str  # "ZF" or "MMSE"
    multi_branch: bool

    @property
    def is_thp(self) -> bool:
        return self.structure != "linear"

    @property
    def scheme(self) -> str:
        return f"{self.mode}-{self.structure}"


def parse_precoder(name: str) -> PrecoderSpec:
    """Accepts ``linear-ZF``, ``linear-MMSE``, ``{ZF,MMSE}-{cTHP,dTHP}`` and
    ``MB-`` prefixed THP names."""
    raw = name.strip()
    parts = raw.upper().split("-")
    if len(parts) == 2 and parts[0] == "LINEAR" and parts[1] in ("ZF", "MMSE"):
        return PrecoderSpec(f"linear-{parts[1]}", "linear", parts[1], False)
    mb = parts[0] == "MB"
    if mb:
        parts = parts[1:]
    if len(parts) == 2 and parts[0] in ("ZF", "MMSE") and parts[1] in ("CTHP", "DTHP"):
        structure = "cTHP" if parts[1] == "CTHP" else "dTHP"
        label = ("MB-" if mb else "") + f"{parts[0]}-{structure}"
        return PrecoderSpec(label, structure, parts[0], mb)
    raise ConfigInvalid(f"unknown precoder {name!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    num_tx: int = 8
    users: tuple = (2, 2, 2, 2)
    modulation: str = "QPSK"
    precoder: str = "MMSE-cTHP"
    branches: int = 1
    ebno_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0)
    trials: int = 100_000
    packet_len: int = 100
    master_seed: int = 0
    correlation_r: float = 0.0
    csi_error_var: float = 0.0
    metric: str = "ber"
    channel_model: str = "rayleigh"
    workers: int = 1
    batch_trials: int = 250

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(int(u) for u in self.users))
        object.__setattr__(self, "ebno_db", tuple(float(e) for e in self.ebno_db))
        if self.trials < 1:
            raise ConfigInvalid("trials must be at least 1")
        if self.packet_len < 1:
            raise ConfigInvalid("packet_len must be at least 1")
        if self.batch_trials < 1:
            raise ConfigInvalid("batch_trials must be at least 1")
        if self.workers < 1:
            raise ConfigInvalid("workers must be at least 1")
        if not self.ebno_db:
            raise ConfigInvalid("ebno_db is empty")
        if any(math.isnan(e) or e == -math.inf for e in self.ebno_db):
            raise ConfigInvalid("ebno_db points must be numbers below +inf or +inf itself")
        if self.metric not in METRICS:
            raise ConfigInvalid(f"metric must be one of {METRICS}")
        if self.channel_model not in CHANNEL_MODELS:
            raise ConfigInvalid(f"channel_model must be one of {CHANNEL_MODELS}")
        if not -1.0 < self.correlation_r < 1.0:
            raise ConfigInvalid("correlation_r must satisfy |r| < 1")
        if self.csi_error_var < 0:
            raise ConfigInvalid("csi_error_var must be non-negative")
        spec = parse_precoder(self.precoder)
        if spec.multi_branch and self.branches < 1:
            raise ConfigInvalid("branches must be at least 1")
        try:
            get_constellation(self.modulation)
        except ValueError as exc:
            raise ConfigInvalid(str(exc)) from None
        self.geometry  # validates the antenna split

    @property
    def geometry(self) -> SystemGeometry:
        return SystemGeometry(self.num_tx, self.users)

    @property
    def precoder_spec(self) -> PrecoderSpec:
        return parse_precoder(self.precoder)

    @property
    def effective_branches(self) -> int:
        return self.branches if self.precoder_spec.multi_branch else 1

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def parse_ebno_range(text: str) -> tuple:
    """``start:step:stop`` inclusive of ``stop``; a single number is one point."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigInvalid(f"bad Eb/N0 range {text!r}") from None
    if len(nums) == 1:
        return (nums[0],)
    if len(nums) != 3 or nums[1] <= 0 or nums[2] < nums[0]:
        raise ConfigInvalid(f"Eb/N0 range must be start:step:stop with step > 0, got {text!r}")
    start, step, stop = nums
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


def load_config(path) -> ExperimentConfig:
    """Read a flat YAML mapping of ``ExperimentConfig`` fields."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigInvalid("config file must hold a flat mapping")
    unknown = sorted(set(data) - _FIELDS)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}")
    for key, val in data.items():
        if isinstance(val, dict):
            raise ConfigInvalid(f"config key {key!r} must not be nested")
    if isinstance(data.get("ebno_db"), str):
        data["ebno_db"] = parse_ebno_range(data["ebno_db"])
    elif "ebno_db" in data and not isinstance(data["ebno_db"], (list, tuple)):
        data["ebno_db"] = (data["ebno_db"],)
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigInvalid(str(exc)) from None


CSV_HEADER = ("precoder,structure,mode,branches,modulation,ebno_db,trials,bits_sent,"
              "bit_errors,ber,mean_sum_rate,mean_selected_branch,corr_r,csi_err_var,seed")


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


@dataclass(frozen=True)
class ResultRow:
    precoder: str
    structure: str
    mode: str
    branches: int
    modulation: str
    ebno_db: float
    trials: int
    bits_sent: int
    bit_errors: int
    ber: float
    mean_sum_rate: float
    mean_selected_branch: float
    corr_r: float
    csi_err_var: float
    seed: int
    redraws: int = field(default=0, compare=False)

    def csv_line(self) -> str:
        vals = [getattr(self, name) for name in CSV_HEADER.split(",")]
        return ",".join(_fmt(v) for v in vals)
