"""Run configuration: a versioned JSON document with one section per concern.

Example::

    {
      "config_version": 1,
      "seed": 7,
      "scenario": {"name": "scenario1", "n_trials": 10, "snr_grid_db": [0, 10, 20]},
      "observation": {"scale_range": [1, 5], "shift_range_s": [0, 2]},
      "methods": ["gaussian_window", "lsrf"],
      "training": {"n_records": 500, "split": [400, 100], "n_restarts": 15},
      "segment_policy": {"floor_fraction": 0.05, "cycles": 10, "tail_guard_s": 0.5},
      "baselines": {"lsrf_data": "magnitude"},
      "interference": {"delta_f_grid_hz": [10, 6, 3, 1]},
      "workers": 1,
      "timing": false
    }

Every section and key is optional except ``config_version``. Unknown keys
are errors, so typos never pass silently.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .envelope import KernelForm
from .harness import (ALL_METHODS, FULL_SCALE_RECORDINGS, FULL_SCALE_TRAINING, SCENARIOS,
                      BaselineOptions, InterferenceConfig, ScenarioConfig, TrainingConfig)
from .optimize import TrainConfig
from .segment import SegmentPolicy
from .signal_model import ModalMode, ModalSystem, ObservationConfig

CONFIG_VERSION = 1
SEED_ENV_VAR = "ENVDAMP_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    scenario: ScenarioConfig = SCENARIOS["scenario1"]
    interference: InterferenceConfig = field(default_factory=InterferenceConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    baselines: BaselineOptions = field(default_factory=BaselineOptions)
    policy: SegmentPolicy = field(default_factory=SegmentPolicy)
    methods: tuple[str, ...] | None = None
    workers: int = 1
    timing: bool = False

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_TOP_KEYS = {"config_version", "seed", "scenario", "observation", "methods", "training",
             "segment_policy", "baselines", "interference", "workers", "timing"}
_SCENARIO_KEYS = {"name", "frequencies_hz", "damping_ratios", "amplitudes", "target_mode_index",
                  "snr_grid_db", "n_recordings", "n_trials", "n_samples", "sample_rate_hz"}
_TRAIN_OPT_KEYS = {"n_restarts", "step_size", "max_iters", "tol", "theta_bounds", "n_grid_seeds",
                   "n_prescan", "selection_tolerance"}
_TRAIN_DATA_KEYS = {"n_records", "split", "zeta_range", "amplitude_range", "snr_range_db"}
_INTERFERENCE_KEYS = {"target_freq_hz", "target_zeta", "target_amp", "interferer_zeta",
                      "interferer_amp", "delta_f_grid_hz", "snr_points_db", "n_recordings",
                      "n_trials", "fit_scenario", "fit_mode_index"}


def _section(data, name, allowed):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"section {name!r} must be an object")
    extra = set(sec) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in {name!r}: {', '.join(sorted(extra))}")
    return sec


def _pair(value, name):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{name} must be a two-element list")
    return tuple(float(v) for v in value)


def parse_methods(value) -> tuple[str, ...]:
    """``"all"``, a comma-separated string, or a list of method ids."""
    if isinstance(value, str):
        if value.strip().lower() == "all":
            return ALL_METHODS
        value = [v for v in value.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("methods must be 'all' or a nonempty list")
    out = []
    for m in value:
        key = str(m).strip().lower()
        if key not in ALL_METHODS:
            try:
                key = KernelForm.parse(key).value
            except (KeyError, ValueError):
                raise ConfigError(f"unknown method {m!r}") from None
        out.append(key)
    return tuple(dict.fromkeys(out))


def _scenario(sec, observation) -> ScenarioConfig:
    name = sec.get("name", "scenario1")
    custom = {"frequencies_hz", "damping_ratios", "amplitudes"} & set(sec)
    if custom:
        if custom != {"frequencies_hz", "damping_ratios", "amplitudes"}:
            raise ConfigError("custom scenarios need frequencies_hz, damping_ratios and amplitudes")
        base = ScenarioConfig(name, ModalSystem.from_arrays(sec["frequencies_hz"],
                                                            sec["damping_ratios"],
                                                            sec["amplitudes"]))
    elif name in SCENARIOS:
        base = SCENARIOS[name]
    else:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}")
    changes = {k: sec[k] for k in ("target_mode_index", "n_recordings", "n_trials", "n_samples",
                                   "sample_rate_hz") if k in sec}
    if "snr_grid_db" in sec:
        changes["snr_grid_db"] = tuple(float(s) for s in sec["snr_grid_db"])
    return base.with_(observation=observation, **changes)


def config_from_dict(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if data.get("config_version") != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, "
                          f"got {data.get('config_version')!r}")
    extra = set(data) - _TOP_KEYS
    if extra:
        raise ConfigError(f"unknown top-level keys: {', '.join(sorted(extra))}")
    try:
        obs_sec = _section(data, "observation", {"scale_range", "shift_range_s"})
        observation = ObservationConfig(
            **{k: _pair(v, k) for k, v in obs_sec.items()})
        scenario = _scenario(_section(data, "scenario", _SCENARIO_KEYS), observation)

        tr = _section(data, "training", _TRAIN_OPT_KEYS | _TRAIN_DATA_KEYS)
        opt = {k: tr[k] for k in _TRAIN_OPT_KEYS if k in tr}
        if "theta_bounds" in opt:
            opt["theta_bounds"] = _pair(opt["theta_bounds"], "theta_bounds")
        tdata = {k: tr[k] for k in _TRAIN_DATA_KEYS if k in tr}
        for k in ("zeta_range", "amplitude_range", "snr_range_db"):
            if k in tdata:
                tdata[k] = _pair(tdata[k], k)
        if "split" in tdata:
            tdata["split"] = tuple(int(v) for v in tdata["split"])
        training = TrainingConfig(optimizer=TrainConfig(**opt), **tdata)

        policy = SegmentPolicy(**_section(data, "segment_policy",
                                          {f.name for f in fields(SegmentPolicy)}))
        bsec = _section(data, "baselines", {f.name for f in fields(BaselineOptions)})
        if "band_rel" in bsec:
            bsec = dict(bsec, band_rel=_pair(bsec["band_rel"], "band_rel"))
        baselines = BaselineOptions(**bsec)

        isec = dict(_section(data, "interference", _INTERFERENCE_KEYS))
        default_target = InterferenceConfig().target
        target = ModalMode(float(isec.pop("target_freq_hz", default_target.damped_freq_hz)),
                           float(isec.pop("target_zeta", default_target.damping_ratio)),
                           float(isec.pop("target_amp", default_target.amplitude)))
        for k in ("delta_f_grid_hz", "snr_points_db"):
            if k in isec:
                isec[k] = tuple(float(v) for v in isec[k])
        interference = InterferenceConfig(target=target, observation=observation, **isec)

        methods = parse_methods(data["methods"]) if "methods" in data else None
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError("seed must be an integer")
        workers = data.get("workers", 1)
        if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
            raise ConfigError("workers must be a positive integer")
        timing = data.get("timing", False)
        if not isinstance(timing, bool):
            raise ConfigError("timing must be true or false")
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(seed, scenario, interference, training, baselines, policy, methods,
                     workers, timing)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_dict(data)


def resolve_seed(cli_seed: int | None, cfg: RunConfig, environ=None) -> int:
    """``--seed`` beats the config file, which beats ``ENVDAMP_SEED``; default 0."""
    if cli_seed is not None:
        return int(cli_seed)
    if cfg.seed is not None:
        return int(cfg.seed)
    env = (os.environ if environ is None else environ).get(SEED_ENV_VAR, "").strip()
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return 0


def apply_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return cfg.with_(seed=seed, scenario=cfg.scenario.with_(rng_seed=seed),
                     interference=replace(cfg.interference, rng_seed=seed),
                     training=replace(cfg.training, seed=seed))


def apply_paper_scale(cfg: RunConfig) -> RunConfig:
    """Full-size training set and 100 recordings per ensemble."""
    training = replace(cfg.training, n_records=FULL_SCALE_TRAINING.n_records,
                       split=FULL_SCALE_TRAINING.split)
    return cfg.with_(training=training,
                     scenario=cfg.scenario.with_(n_recordings=FULL_SCALE_RECORDINGS),
                     interference=replace(cfg.interference,
                                          n_recordings=FULL_SCALE_RECORDINGS))


def describe(cfg: RunConfig) -> dict:
    """JSON-safe echo of the effective configuration."""
    sc = cfg.scenario
    return {
        "config_version": CONFIG_VERSION,
        "seed": cfg.seed,
        "scenario": {
            "name": sc.name,
            "frequencies_hz": list(sc.modes.frequencies),
            "damping_ratios": [m.damping_ratio for m in sc.modes.modes],
            "amplitudes": [m.amplitude for m in sc.modes.modes],
            "target_mode_index": sc.target_mode_index,
            "snr_grid_db": [s if s != float("inf") else "inf" for s in sc.snr_grid_db],
            "n_recordings": sc.n_recordings,
            "n_trials": sc.n_trials,
        },
        "observation": {"scale_range": list(sc.observation.scale_range),
                        "shift_range_s": list(sc.observation.shift_range_s)},
        "training": {
            "n_records": cfg.training.n_records, "split": list(cfg.training.split),
            "zeta_range": list(cfg.training.zeta_range),
            "amplitude_range": list(cfg.training.amplitude_range),
            "snr_range_db": list(cfg.training.snr_range_db),
            "n_restarts": cfg.training.optimizer.n_restarts,
            "step_size": cfg.training.optimizer.step_size,
        },
        "segment_policy": asdict(cfg.policy),
        "baselines": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in asdict(cfg.baselines).items()},
        "methods": list(cfg.methods) if cfg.methods else None,
    }
