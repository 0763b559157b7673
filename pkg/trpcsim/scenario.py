"""
YAML scenario files.

Example (schema 1)::

    schema: 1
    mode: r250                 # preset name, or a mapping for a custom cluster
    lo: {frequency_hz: 7.884e+9, phase_rad: 0.0}
    impairments: {dc_offset_i: 0.0, phase_imbalance: 0.0}   # V, V, dB, degrees, dB
    channel:
      taps:
        - {delay: 0.0, gain: 1.0, sign: 1}
    noise: {noise_psd: 0.0}    # W/Hz, one-sided
    sweep: {eb_n0_db: [6, 8, 10]}
    run: {seed: 1, n_symbols: 2000, bits: "10", sample_rate: 2.0e+10, rbw: 1.0e+6}
"""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import yaml

from .config import BASEBAND_SAMPLE_RATE, RF_SAMPLE_RATE, WORKERS
from .errors import ParameterError, ScenarioError
from .impairments import IDEAL, ImpairmentConfig
from .link import ChannelModel
from .trpc import ClusterSpec, LoConfig, TxMode, get_mode

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SECTIONS = {"schema", "mode", "lo", "impairments", "channel", "noise", "sweep", "run"}
RUN_KEYS = {
    "seed",
    "n_symbols",
    "bits",
    "sample_rate",
    "rf_sample_rate",
    "rbw",
    "amplitude_scale",
    "workers",
}


@dataclass(frozen=True)
class Scenario:
    """Everything a CLI subcommand needs, fully validated."""

    mode: TxMode
    lo: LoConfig
    impairments: ImpairmentConfig = IDEAL
    channel: ChannelModel = field(default_factory=ChannelModel)
    sweep: Tuple[Optional[float], ...] = ()
    seed: int = 0
    n_symbols: int = 1000
    bits: str = "10"
    sample_rate: float = BASEBAND_SAMPLE_RATE
    rf_sample_rate: float = RF_SAMPLE_RATE
    rbw: float = 1e6
    amplitude_scale: float = 1.0
    workers: int = WORKERS

    def __post_init__(self):
        if self.seed < 0:
            raise ScenarioError(f"seed must be non-negative, got {self.seed}")
        if self.amplitude_scale <= 0:
            raise ScenarioError(f"amplitude_scale must be positive, got {self.amplitude_scale}")
        if self.workers < 1:
            raise ScenarioError("workers must be at least 1")

    @property
    def mode_name(self) -> str:
        return self.mode.name

    @classmethod
    def default(cls, mode_name: str) -> "Scenario":
        mode = get_mode(mode_name)
        return cls(mode=mode, lo=LoConfig(mode.lo_frequency))

    def with_overrides(self, **overrides: Any) -> "Scenario":
        """Replace fields whose override value is not None."""
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def bit_list(self):
        if not self.bits or set(self.bits) - {"0", "1"}:
            raise ParameterError(f"bit pattern must be a non-empty string of 0/1, got '{self.bits}'")
        return [int(b) for b in self.bits]


def _section(data: Mapping, name: str) -> Dict[str, Any]:
    value = data.get(name) or {}
    if not isinstance(value, Mapping):
        raise ScenarioError(f"section '{name}' must be a mapping")
    return dict(value)


def _number(value: Any, what: str) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{what} must be a number, got {value!r}") from None
    if math.isnan(result):
        raise ScenarioError(f"{what} must be a number, got NaN")
    return result


def _parse_mode(value: Any) -> TxMode:
    if isinstance(value, str):
        return get_mode(value)
    if not isinstance(value, Mapping):
        raise ScenarioError("mode must be a preset name or a cluster mapping")

    base = get_mode(value["preset"]) if "preset" in value else None
    try:
        symbol_rate = _number(value.get("symbol_rate", base.data_rate if base else None), "symbol_rate")
        pulse_width = _number(value.get("pulse_width", base.cluster.pulse_width if base else None), "pulse_width")
        cluster = ClusterSpec(
            n_pulses=int(value.get("n_pulses", base.cluster.n_pulses if base else 0)),
            pulse_width=pulse_width,
            pulse_delay=_number(value.get("pulse_delay", pulse_width), "pulse_delay"),
            symbol_duration=1.0 / symbol_rate,
            amplitude=_number(
                value.get("amplitude", base.max_amplitude if base else None), "amplitude"
            ),
            beta=_number(value.get("beta", 0.25), "beta"),
        )
    except ParameterError as e:
        raise ScenarioError(f"invalid custom mode: {e}") from e
    return TxMode(
        name=str(value.get("name", "custom")),
        data_rate=symbol_rate,
        cluster=cluster,
        bw_3db=_number(value.get("bw_3db", base.bw_3db if base else 1.0 / pulse_width), "bw_3db"),
        p_peak_rrc=_number(value.get("p_peak_rrc", base.p_peak_rrc if base else 0.0), "p_peak_rrc"),
        max_amplitude=cluster.amplitude if cluster.amplitude > 0 else 1.0,
        lo_frequency=_number(
            value.get("lo_frequency", base.lo_frequency if base else 3.827e9), "lo_frequency"
        ),
    )


def parse_scenario(data: Mapping[str, Any]) -> Scenario:
    """Validate a decoded scenario document."""
    if not isinstance(data, Mapping):
        raise ScenarioError("scenario document must be a mapping")
    unknown = set(data) - SECTIONS
    if unknown:
        raise ScenarioError(f"unknown scenario sections: {', '.join(sorted(unknown))}")
    if data.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(
            f"unsupported or missing schema {data.get('schema')!r}; expected {SCHEMA_VERSION}"
        )
    if "mode" not in data:
        raise ScenarioError("scenario needs a 'mode'")

    try:
        mode = _parse_mode(data["mode"])

        lo_section = _section(data, "lo")
        lo = LoConfig(
            frequency=_number(lo_section.get("frequency_hz", mode.lo_frequency), "lo.frequency_hz"),
            phase=_number(lo_section.get("phase_rad", 0.0), "lo.phase_rad"),
            amplitude=_number(lo_section.get("amplitude", 1.0), "lo.amplitude"),
        )

        impairments = ImpairmentConfig.from_mapping(_section(data, "impairments"))

        channel_section = _section(data, "channel")
        noise_section = _section(data, "noise")
        taps = channel_section.get("taps") or [{"delay": 0.0}]
        channel = ChannelModel.from_mapping(
            taps, _number(noise_section.get("noise_psd", 0.0), "noise.noise_psd")
        )

        sweep_section = _section(data, "sweep")
        sweep = tuple(
            None if point is None else _number(point, "sweep.eb_n0_db")
            for point in sweep_section.get("eb_n0_db") or ()
        )

        run = _section(data, "run")
        unknown_run = set(run) - RUN_KEYS
        if unknown_run:
            raise ScenarioError(f"unknown run keys: {', '.join(sorted(unknown_run))}")
        return Scenario(
            mode=mode,
            lo=lo,
            impairments=impairments,
            channel=channel,
            sweep=sweep,
            seed=int(run.get("seed", 0)),
            n_symbols=int(run.get("n_symbols", 1000)),
            bits=str(run.get("bits", "10")),
            sample_rate=_number(run.get("sample_rate", BASEBAND_SAMPLE_RATE), "run.sample_rate"),
            rf_sample_rate=_number(run.get("rf_sample_rate", RF_SAMPLE_RATE), "run.rf_sample_rate"),
            rbw=_number(run.get("rbw", 1e6), "run.rbw"),
            amplitude_scale=_number(run.get("amplitude_scale", 1.0), "run.amplitude_scale"),
            workers=int(run.get("workers", WORKERS)),
        )
    except ScenarioError:
        raise
    except ParameterError as e:
        raise ScenarioError(str(e)) from e
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"invalid scenario value: {e}") from e


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a YAML scenario file."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise OSError(f"Cannot read scenario {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ScenarioError(f"{path}: not valid YAML: {e}") from e

    scenario = parse_scenario(data)
    logger.info(f"Loaded scenario {path} (mode {scenario.mode_name}, seed {scenario.seed})")
    return scenario
