"""Run configuration: the parameter tree the engine consumes, a flat
key = value file format, and the bundled presets.

Keys carry their unit in the name (gamma_hz, width_ns, jitter_fwhm_ps) so a
number in a config file can never be misread.  Frequencies are ordinary
frequencies in Hz; internally everything is SI with angular frequencies in
rad/s and times in seconds.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from decimal import Decimal
from importlib import resources

from .feedforward import FeedForwardConfig
from .polarization import AnalyzerSetting
from .temporal import BsmBranch, ModeParams, PumpParams, delta_omega

_TWO_PI = 2.0 * math.pi
_DEG = math.pi / 180.0

# Gaussian FWHM over sigma, 2*sqrt(2*ln 2).
FWHM_TO_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class ConfigError(ValueError):
    """Configuration text that cannot be parsed (syntax, unknown key,
    unreadable value).  Distinct from a parseable config that violates a
    physical constraint, which raises ConfigValidationError."""


class ConfigValidationError(ValueError):
    """A parsed configuration whose values break a range or consistency
    constraint (probability above 0.5, negative jitter, and so on)."""


@dataclass(frozen=True)
class DetectorParams:
    """Timing spread and quantum efficiency of one single-photon detector."""

    jitter_fwhm: float = 0.0
    efficiency: float = 1.0

    def __post_init__(self):
        if self.jitter_fwhm < 0.0:
            raise ConfigValidationError(
                f"detector jitter FWHM must be >= 0, got {self.jitter_fwhm}"
            )
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigValidationError(
                f"detector efficiency must lie in [0, 1], got {self.efficiency}"
            )

    @property
    def jitter_sigma(self) -> float:
        return self.jitter_fwhm / FWHM_TO_SIGMA


@dataclass(frozen=True)
class SourceParams:
    """One photon-pair source: its emitted mode and the pair probability
    per pump pulse."""

    mode: ModeParams
    pair_probability: float = 0.05

    def __post_init__(self):
        # Above 0.5 the multi-pair terms the model keeps to second order
        # would dominate, so the config refuses rather than extrapolates.
        if not 0.0 <= self.pair_probability <= 0.5:
            raise ConfigValidationError(
                f"pair_probability must lie in [0, 0.5], got {self.pair_probability}"
            )


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one simulated run, SI units throughout.

    bsm_d1 and bsm_d2 are the two detectors behind the central beam
    splitter whose timing defines the measured time difference; det_a and
    det_b sit after the outer polarization analyzers and only thin the
    event rate.
    """

    source_a: SourceParams
    source_b: SourceParams
    pump: PumpParams
    feedforward: FeedForwardConfig
    rep_rate: float = 2e6
    coincidence_window: float = 300e-9
    bsm_d1: DetectorParams = DetectorParams()
    bsm_d2: DetectorParams = DetectorParams()
    det_a: DetectorParams = DetectorParams()
    det_b: DetectorParams = DetectorParams()
    analyzer: AnalyzerSetting = AnalyzerSetting(math.pi / 4, math.pi / 4)
    accepted_branches: tuple[BsmBranch, ...] = (BsmBranch.PHI_PLUS, BsmBranch.PHI_MINUS)
    mode_overlap: float = 1.0
    multipair_enabled: bool = True

    def __post_init__(self):
        if not self.rep_rate > 0.0:
            raise ConfigValidationError(f"rep_rate must be positive, got {self.rep_rate}")
        if not self.coincidence_window > 0.0:
            raise ConfigValidationError(
                f"coincidence_window must be positive, got {self.coincidence_window}"
            )
        if not 0.0 <= self.mode_overlap <= 1.0:
            raise ConfigValidationError(
                f"mode_overlap must lie in [0, 1], got {self.mode_overlap}"
            )
        chosen = set(self.accepted_branches)
        if not chosen <= set(BsmBranch):
            raise ConfigValidationError(
                f"accepted_branches may only contain BSM branches, got {self.accepted_branches!r}"
            )
        # Canonical order regardless of how the caller listed them.
        object.__setattr__(
            self, "accepted_branches", tuple(b for b in BsmBranch if b in chosen)
        )

    @property
    def delta_omega(self) -> float:
        """Angular frequency separation of the two source modes."""
        return delta_omega(self.source_a.mode, self.source_b.mode)


# Canonical keys in file units, in dump order.  These values are also the
# defaults for any key a config file omits.
_DEFAULTS = {
    "source_a.gamma_hz": 5.6e6,
    "source_a.center_offset_hz": 0.0,
    "source_a.pair_probability": 0.05,
    "source_b.gamma_hz": 5.6e6,
    "source_b.center_offset_hz": 0.0,
    "source_b.pair_probability": 0.05,
    "pump.width_ns": 50.0,
    "rep_rate_hz": 2e6,
    "coincidence_window_ns": 300.0,
    "mode_overlap": 1.0,
    "detectors.d1_jitter_fwhm_ps": 0.0,
    "detectors.d1_efficiency": 1.0,
    "detectors.d2_jitter_fwhm_ps": 0.0,
    "detectors.d2_efficiency": 1.0,
    "detectors.a_jitter_fwhm_ps": 0.0,
    "detectors.a_efficiency": 1.0,
    "detectors.b_jitter_fwhm_ps": 0.0,
    "detectors.b_efficiency": 1.0,
    "feedforward.enabled": False,
    "feedforward.delta_omega_hz": 0.0,
    "feedforward.fixed_offset_ns": 150.0,
    "feedforward.delta_t_ns": 0.0,
    "feedforward.tac_range_ns": 300.0,
    "feedforward.tac_resolution_ps": 0.0,
    "feedforward.chain_latency_ns": 360.0,
    "feedforward.compensation_delay_ns": 735.0,
    "analyzer.angle_a_deg": 45.0,
    "analyzer.angle_b_deg": 45.0,
    "analyzer.circular": False,
    "bsm.accept_phi_plus": True,
    "bsm.accept_phi_minus": True,
    "multipair.enabled": True,
}

_BOOL_KEYS = frozenset(k for k, v in _DEFAULTS.items() if isinstance(v, bool))

# Multiplicative units (irrational factors, applied as one rounded product).
_MUL_UNITS = {
    "source_a.gamma_hz": _TWO_PI,
    "source_a.center_offset_hz": _TWO_PI,
    "source_b.gamma_hz": _TWO_PI,
    "source_b.center_offset_hz": _TWO_PI,
    "feedforward.delta_omega_hz": _TWO_PI,
    "analyzer.angle_a_deg": _DEG,
    "analyzer.angle_b_deg": _DEG,
}

# Power-of-ten units, applied as an exact decimal exponent shift so that a
# value like 300 ns becomes bit-identical to the literal 300e-9.
_EXP_UNITS = {
    "pump.width_ns": -9,
    "coincidence_window_ns": -9,
    "detectors.d1_jitter_fwhm_ps": -12,
    "detectors.d2_jitter_fwhm_ps": -12,
    "detectors.a_jitter_fwhm_ps": -12,
    "detectors.b_jitter_fwhm_ps": -12,
    "feedforward.fixed_offset_ns": -9,
    "feedforward.delta_t_ns": -9,
    "feedforward.tac_range_ns": -9,
    "feedforward.tac_resolution_ps": -12,
    "feedforward.chain_latency_ns": -9,
    "feedforward.compensation_delay_ns": -9,
}


def _to_si(key: str, value: float) -> float:
    if key in _EXP_UNITS:
        return float(Decimal(value).scaleb(_EXP_UNITS[key]))
    return value * _MUL_UNITS.get(key, 1.0)

# Convenience keys that set a detector pair at once.  They conflict with
# their per-detector forms rather than silently overriding them.
_GROUP_KEYS = {
    "detectors.bsm_jitter_fwhm_ps": (
        "detectors.d1_jitter_fwhm_ps",
        "detectors.d2_jitter_fwhm_ps",
    ),
    "detectors.bsm_efficiency": (
        "detectors.d1_efficiency",
        "detectors.d2_efficiency",
    ),
    "detectors.analyzer_jitter_fwhm_ps": (
        "detectors.a_jitter_fwhm_ps",
        "detectors.b_jitter_fwhm_ps",
    ),
    "detectors.analyzer_efficiency": (
        "detectors.a_efficiency",
        "detectors.b_efficiency",
    ),
}


def _convert_value(key: str, text: str, lineno: int):
    if key in _BOOL_KEYS:
        lowered = text.lower()
        if lowered == "true":
            return True
        if lowered == "false":
            return False
        raise ConfigError(f"line {lineno}: {key} expects true or false, got {text!r}")
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"line {lineno}: cannot read {text!r} as a number for {key}") from None
    if not math.isfinite(value):
        raise ConfigError(f"line {lineno}: {key} must be finite, got {text!r}")
    return value


def _parse_pairs(text: str) -> dict:
    """Key = value lines to a dict of canonical keys in file units.

    '#' starts a comment, blank lines are skipped, duplicate assignments
    (including through a detector-pair convenience key) are rejected.
    """
    out: dict = {}
    origin: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {body!r}")
        key, _, value_text = body.partition("=")
        key, value_text = key.strip(), value_text.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key before '='")
        if not value_text:
            raise ConfigError(f"line {lineno}: missing value for {key!r}")
        targets = _GROUP_KEYS.get(key, (key,))
        if targets[0] not in _DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        for target in targets:
            if target in origin:
                raise ConfigError(
                    f"line {lineno}: {target!r} was already set on line {origin[target]}"
                )
            origin[target] = lineno
        bool_key = targets[0] if key in _GROUP_KEYS else key
        value = _convert_value(bool_key, value_text, lineno)
        for target in targets:
            out[target] = value
    return out


def _build(raw: dict) -> ExperimentConfig:
    def si(key):
        value = raw[key]
        return value if key in _BOOL_KEYS else _to_si(key, value)

    branches = []
    if raw["bsm.accept_phi_plus"]:
        branches.append(BsmBranch.PHI_PLUS)
    if raw["bsm.accept_phi_minus"]:
        branches.append(BsmBranch.PHI_MINUS)
    try:
        return ExperimentConfig(
            source_a=SourceParams(
                mode=ModeParams(
                    gamma=si("source_a.gamma_hz"),
                    omega_offset=si("source_a.center_offset_hz"),
                ),
                pair_probability=si("source_a.pair_probability"),
            ),
            source_b=SourceParams(
                mode=ModeParams(
                    gamma=si("source_b.gamma_hz"),
                    omega_offset=si("source_b.center_offset_hz"),
                ),
                pair_probability=si("source_b.pair_probability"),
            ),
            pump=PumpParams(width=si("pump.width_ns")),
            feedforward=FeedForwardConfig(
                delta_omega_setting=si("feedforward.delta_omega_hz"),
                fixed_offset=si("feedforward.fixed_offset_ns"),
                delta_t=si("feedforward.delta_t_ns"),
                tac_range=si("feedforward.tac_range_ns"),
                tac_resolution=si("feedforward.tac_resolution_ps"),
                enabled=si("feedforward.enabled"),
                chain_latency=si("feedforward.chain_latency_ns"),
                compensation_delay=si("feedforward.compensation_delay_ns"),
            ),
            rep_rate=si("rep_rate_hz"),
            coincidence_window=si("coincidence_window_ns"),
            bsm_d1=DetectorParams(
                jitter_fwhm=si("detectors.d1_jitter_fwhm_ps"),
                efficiency=si("detectors.d1_efficiency"),
            ),
            bsm_d2=DetectorParams(
                jitter_fwhm=si("detectors.d2_jitter_fwhm_ps"),
                efficiency=si("detectors.d2_efficiency"),
            ),
            det_a=DetectorParams(
                jitter_fwhm=si("detectors.a_jitter_fwhm_ps"),
                efficiency=si("detectors.a_efficiency"),
            ),
            det_b=DetectorParams(
                jitter_fwhm=si("detectors.b_jitter_fwhm_ps"),
                efficiency=si("detectors.b_efficiency"),
            ),
            analyzer=AnalyzerSetting(
                angle_a=si("analyzer.angle_a_deg"),
                angle_b=si("analyzer.angle_b_deg"),
                circular=si("analyzer.circular"),
            ),
            accepted_branches=tuple(branches),
            mode_overlap=si("mode_overlap"),
            multipair_enabled=si("multipair.enabled"),
        )
    except ConfigValidationError:
        raise
    except ValueError as exc:
        # Range checks living on the component dataclasses surface as the
        # same error class as the checks done here.
        raise ConfigValidationError(str(exc)) from exc


def parse_config(text: str) -> ExperimentConfig:
    """Resolve config text against the defaults.  Empty text is the
    default configuration."""
    raw = dict(_DEFAULTS)
    raw.update(_parse_pairs(text))
    return _build(raw)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def _to_file(key: str, value: float) -> float:
    # Invert _to_si at the bit level so dumped text re-parses to the
    # identical float.  The directed nextafter walk covers the case where
    # the rounded inverse lands on a neighbour.
    if value == 0.0:
        return value
    if key in _EXP_UNITS:
        out = float(Decimal(value).scaleb(-_EXP_UNITS[key]))
    elif key in _MUL_UNITS:
        out = value / _MUL_UNITS[key]
    else:
        return value
    best = out
    for _ in range(4):
        forward = _to_si(key, out)
        if forward == value:
            return out
        out = math.nextafter(out, math.inf if forward < value else -math.inf)
    return best


def _raw_from_config(cfg: ExperimentConfig) -> dict:
    si_values = {
        "source_a.gamma_hz": cfg.source_a.mode.gamma,
        "source_a.center_offset_hz": cfg.source_a.mode.omega_offset,
        "source_a.pair_probability": cfg.source_a.pair_probability,
        "source_b.gamma_hz": cfg.source_b.mode.gamma,
        "source_b.center_offset_hz": cfg.source_b.mode.omega_offset,
        "source_b.pair_probability": cfg.source_b.pair_probability,
        "pump.width_ns": cfg.pump.width,
        "rep_rate_hz": cfg.rep_rate,
        "coincidence_window_ns": cfg.coincidence_window,
        "mode_overlap": cfg.mode_overlap,
        "detectors.d1_jitter_fwhm_ps": cfg.bsm_d1.jitter_fwhm,
        "detectors.d1_efficiency": cfg.bsm_d1.efficiency,
        "detectors.d2_jitter_fwhm_ps": cfg.bsm_d2.jitter_fwhm,
        "detectors.d2_efficiency": cfg.bsm_d2.efficiency,
        "detectors.a_jitter_fwhm_ps": cfg.det_a.jitter_fwhm,
        "detectors.a_efficiency": cfg.det_a.efficiency,
        "detectors.b_jitter_fwhm_ps": cfg.det_b.jitter_fwhm,
        "detectors.b_efficiency": cfg.det_b.efficiency,
        "feedforward.delta_omega_hz": cfg.feedforward.delta_omega_setting,
        "feedforward.fixed_offset_ns": cfg.feedforward.fixed_offset,
        "feedforward.delta_t_ns": cfg.feedforward.delta_t,
        "feedforward.tac_range_ns": cfg.feedforward.tac_range,
        "feedforward.tac_resolution_ps": cfg.feedforward.tac_resolution,
        "feedforward.chain_latency_ns": cfg.feedforward.chain_latency,
        "feedforward.compensation_delay_ns": cfg.feedforward.compensation_delay,
        "analyzer.angle_a_deg": cfg.analyzer.angle_a,
        "analyzer.angle_b_deg": cfg.analyzer.angle_b,
    }
    raw = {key: _to_file(key, value) for key, value in si_values.items()}
    raw.update(
        {
            "feedforward.enabled": cfg.feedforward.enabled,
            "analyzer.circular": cfg.analyzer.circular,
            "bsm.accept_phi_plus": BsmBranch.PHI_PLUS in cfg.accepted_branches,
            "bsm.accept_phi_minus": BsmBranch.PHI_MINUS in cfg.accepted_branches,
            "multipair.enabled": cfg.multipair_enabled,
        }
    )
    return raw


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(float(value))


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical text form, one key per line, grouped by section.

    parse_config(dump_config(cfg)) == cfg for any config that came from a
    file, because values are written back in the shortest digits that
    re-parse to the identical internal floats.
    """
    raw = _raw_from_config(cfg)
    lines = []
    section = None
    for key in _DEFAULTS:
        prefix = key.partition(".")[0] if "." in key else ""
        if section is not None and prefix != section:
            lines.append("")
        section = prefix
        lines.append(f"{key} = {_format_value(raw[key])}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig, include_analyzer: bool = True) -> str:
    """Hex digest of the resolved configuration, independent of the key
    order in the source file.  include_analyzer=False identifies runs
    that differ only in the analyzer setting, which is what makes three
    single-axis logs combinable into one witness estimate."""
    raw = _raw_from_config(cfg)
    keys = sorted(k for k in raw if include_analyzer or not k.startswith("analyzer."))
    payload = "\n".join(f"{k}={_format_value(raw[k])}" for k in keys)
    return hashlib.sha256(payload.encode("ascii")).hexdigest()


def preset_names() -> list:
    root = resources.files("colorswap") / "presets"
    return sorted(entry.name[: -len(".cfg")] for entry in root.iterdir() if entry.name.endswith(".cfg"))


def preset_text(name: str) -> str:
    entry = resources.files("colorswap") / "presets" / f"{name}.cfg"
    try:
        return entry.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}"
        ) from None


def load_preset(name: str) -> ExperimentConfig:
    return parse_config(preset_text(name))
