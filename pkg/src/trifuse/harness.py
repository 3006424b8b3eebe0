"""Config-driven experiment harness.

Assembles the full pipeline (data -> streams -> dual backbone -> FPN) for a
single configuration, and enumerates ablation grids over placement,
mechanism hyperparameters, modality subsets and backbone capacity.  Every
run is deterministic given (config, seed) and its report embeds the config
so it can be replayed.
"""

from __future__ import annotations

import csv
import itertools
import json
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .backbone import (
    BackboneConfig,
    backbone_param_specs,
    count_params,
    forward_dual,
    normalize_modalities,
    split_streams,
)
from .data import default_stats, load_frame, load_manifest, normalize, pad_to_stride
from .errors import ConfigError, TrifuseError
from .fusion import FusionConfig
from .neck import fpn, fpn_param_specs
from .tensors import init_params

DEFAULT_INPUT_SIZE = (301, 391)

# the set of values each sweep axis may take
SWEEP_AXES = {
    "variant": ("B0", "B1", "B2", "B3", "B4"),
    "mechanism": ("mage_bite", "mage_only", "bite_only", "cssa", "gaff", "none"),
    "stages": None,  # any subset of {1,2,3,4}
    "tau": None,
    "se_ratio": (4, 8),
    "guidance": ("shared", "separate"),
    "merge": ("direct", "bottleneck"),
    "modalities": ("RTE", "RT", "RE", "TE"),
}


@dataclass(frozen=True)
class RunConfig:
    """One cell of the ablation grid.

    Defaults correspond to the main setting: B1 backbone, MAGE+BiTE at all
    four stages, all three modalities, native 301x391 input.  The headline
    placement is not pinned anywhere authoritative, so it stays a plain
    configurable default.
    """

    variant: str = "B1"
    mechanism: str = "mage_bite"
    stages: tuple = (1, 2, 3, 4)
    tau: float = 0.5
    se_ratio: int = 4
    guidance: str = "separate"
    merge: str = "direct"
    modalities: str = "RTE"
    input_size: tuple = DEFAULT_INPUT_SIZE
    seed: int = 0
    batch: int = 1
    source: str = "synthetic"  # synthetic | path to a manifest
    timing_reps: int = 5

    def backbone_config(self):
        return BackboneConfig.variant_config(self.variant)

    def fusion_config(self):
        return FusionConfig(
            mechanism=self.mechanism,
            stages=frozenset(self.stages),
            tau=self.tau,
            se_ratio=self.se_ratio,
            guidance=self.guidance,
            merge=self.merge,
        )

    def validate(self):
        """Raise ConfigError naming the offending field."""
        try:
            cfg = self.backbone_config()
        except ConfigError as e:
            raise ConfigError(f"variant: {e}") from e
        try:
            fus = self.fusion_config()
        except ConfigError as e:
            raise ConfigError(f"fusion: {e}") from e
        try:
            normalize_modalities(self.modalities)
        except ConfigError as e:
            raise ConfigError(f"modalities: {e}") from e
        if fus.mechanism == "gaff":
            for s in fus.stages:
                if cfg.widths[s - 1] % fus.se_ratio:
                    raise ConfigError(
                        f"se_ratio: stage {s} width {cfg.widths[s - 1]} "
                        f"not divisible by {fus.se_ratio}"
                    )
        h, w = self.input_size
        if h < 32 or w < 32:
            raise ConfigError(f"input_size: {h}x{w} too small for the stride schedule")
        if self.batch < 1:
            raise ConfigError(f"batch: must be >= 1, got {self.batch}")
        if self.timing_reps < 1:
            raise ConfigError(f"timing_reps: must be >= 1, got {self.timing_reps}")
        return self

    def key(self):
        st = "".join(str(s) for s in sorted(self.stages)) or "none"
        return (
            f"{self.variant}-{self.mechanism}-s{st}-tau{self.tau}"
            f"-r{self.se_ratio}-{self.guidance}-{self.merge}-{self.modalities}"
        )

    def to_dict(self):
        d = asdict(self)
        d["stages"] = sorted(self.stages)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "stages" in d:
            d["stages"] = tuple(int(s) for s in d["stages"])
        if "input_size" in d:
            d["input_size"] = tuple(int(v) for v in d["input_size"])
        return cls(**d)


@dataclass
class RunReport:
    """Outcome of one run; embeds its config for replay."""

    config: dict
    stage_shapes: list = field(default_factory=list)
    pyramid_shapes: list = field(default_factory=list)
    param_count: int = 0
    forward_ms: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    eval_report: dict = None
    error: str = None

    @property
    def ok(self):
        return self.error is None

    def to_dict(self):
        return {
            "config": self.config,
            "stage_shapes": [list(s) for s in self.stage_shapes],
            "pyramid_shapes": [list(s) for s in self.pyramid_shapes],
            "param_count": self.param_count,
            "forward_ms": self.forward_ms,
            "diagnostics": self.diagnostics,
            "eval_report": self.eval_report,
            "error": self.error,
        }


def build_param_specs(run_cfg, with_neck=True):
    cfg = run_cfg.backbone_config()
    specs = backbone_param_specs(cfg, run_cfg.fusion_config(), run_cfg.modalities)
    if with_neck:
        specs = specs + fpn_param_specs(cfg.widths)
    return specs


def make_input(run_cfg):
    """Build the padded (B, 5, H', W') probe input for a run."""
    if run_cfg.source == "synthetic":
        rng = np.random.default_rng(run_cfg.seed)
        h, w = run_cfg.input_size
        x = rng.standard_normal((run_cfg.batch, 5, h, w)).astype(np.float32)
    else:
        manifest = load_manifest(run_cfg.source)
        frame = load_frame(manifest.entries[0].image, manifest.entries[0].labels)
        x = normalize(frame, default_stats())
        x = np.repeat(x, run_cfg.batch, axis=0)
    padded, orig = pad_to_stride(x, 32)
    return padded, orig


def run_single(run_cfg, params=None):
    """Execute one configuration end to end and report shapes/params/timing."""
    run_cfg.validate()
    specs = build_param_specs(run_cfg)
    if params is None:
        params = init_params(specs, run_cfg.seed)
    cfg = run_cfg.backbone_config()
    fus = run_cfg.fusion_config()
    x, _ = make_input(run_cfg)

    times = []
    diag = {}
    feats = pyramid = None
    for _ in range(run_cfg.timing_reps):
        diag = {}
        t0 = time.perf_counter()
        feats = forward_dual(x, cfg, fus, params, run_cfg.modalities, diag=diag)
        pyramid = fpn(feats, params)
        times.append((time.perf_counter() - t0) * 1000.0)

    return RunReport(
        config=run_cfg.to_dict(),
        stage_shapes=[f.map.shape for f in feats],
        pyramid_shapes=pyramid.shapes(),
        param_count=sum(s.size for s in specs),
        forward_ms=statistics.median(times),
        diagnostics=diag,
    )


def expand_sweep(base, sweep):
    """Cartesian product of sweep axes applied over a base config.

    ``sweep`` maps axis name -> list of values; an empty spec yields the
    base config alone.  Axis order is fixed (sorted) so enumeration is
    deterministic.
    """
    if not sweep:
        return [base]
    for axis in sweep:
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}; valid: {sorted(SWEEP_AXES)}")
    axes = sorted(sweep)
    configs = []
    for combo in itertools.product(*(sweep[a] for a in axes)):
        upd = dict(zip(axes, combo))
        if "stages" in upd:
            upd["stages"] = tuple(int(s) for s in upd["stages"])
        configs.append(replace(base, **upd))
    return configs


def run_grid(base, sweep, workers=1):
    """Run every cell of a sweep; individual failures are recorded, not fatal.

    Returns reports sorted by config key.
    """
    configs = expand_sweep(base, sweep)

    def one(cfg):
        try:
            return run_single(cfg)
        except TrifuseError as e:
            return RunReport(config=cfg.to_dict(), error=f"{type(e).__name__}: {e}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(one, configs))
    else:
        reports = [one(c) for c in configs]
    keyed = sorted(zip(configs, reports), key=lambda cr: cr[0].key())
    return [r for _, r in keyed]


def write_grid_outputs(reports, out_dir):
    """Consolidated JSON + CSV for a grid run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "grid.json", "w") as f:
        json.dump([r.to_dict() for r in reports], f, indent=1)
    with open(out / "grid.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["variant", "mechanism", "stages", "tau", "se_ratio", "guidance",
             "merge", "modalities", "shapes_hash", "param_count", "forward_ms", "error"]
        )
        for r in reports:
            c = r.config
            shapes_hash = format(
                abs(hash(tuple(tuple(s) for s in r.stage_shapes + r.pyramid_shapes))) % (16 ** 8),
                "08x",
            )
            writer.writerow(
                [c["variant"], c["mechanism"], "".join(map(str, c["stages"])) or "none",
                 c["tau"], c["se_ratio"], c["guidance"], c["merge"], c["modalities"],
                 shapes_hash, r.param_count, round(r.forward_ms, 2), r.error or ""]
            )
    return out / "grid.json", out / "grid.csv"


# ---------------------------------------------------------------------------
# the inventory of runs matching the published ablation grid


def ablation_grid_sweeps():
    """The configuration inventory of the full ablation study, as a list of
    (name, base-overrides, sweep) entries."""
    placements = [(1,), (2,), (3,), (4,), (2, 3), (3, 4), (2, 3, 4), (1, 2, 3, 4)]
    gaff_phase2 = [
        # (stages, se_ratio, guidance, merge)
        ((4,), 4, "separate", "bottleneck"),
        ((4,), 4, "shared", "direct"),
        ((4,), 4, "shared", "bottleneck"),
        ((4,), 8, "separate", "direct"),
        ((4,), 8, "separate", "bottleneck"),
        ((4,), 8, "shared", "direct"),
        ((4,), 8, "shared", "bottleneck"),
        ((3,), 4, "separate", "bottleneck"),
        ((3,), 4, "shared", "direct"),
        ((3,), 4, "shared", "bottleneck"),
        ((3,), 8, "separate", "direct"),
    ]
    entries = [
        ("gaff_placement", {"mechanism": "gaff"}, {"stages": placements}),
        ("gaff_mechanism", {"mechanism": "gaff"}, None),  # explicit list below
        ("cssa", {"mechanism": "cssa"},
         {"stages": [(1,), (2,), (3,), (4,), (2, 3), (3, 4), (1, 2, 3, 4)],
          "tau": [0.3, 0.5, 0.7]}),
        ("modality", {}, {"modalities": ["RTE", "RT", "TE", "RE"]}),
        ("capacity", {}, {"variant": ["B0", "B1", "B2", "B3", "B4"]}),
        ("components", {}, {"mechanism": ["mage_bite", "mage_only", "bite_only"]}),
    ]
    return entries, gaff_phase2


def run_ablation_grid(base):
    """Run the whole ablation inventory; returns {name: [RunReport]}."""
    entries, gaff_phase2 = ablation_grid_sweeps()
    results = {}
    for name, overrides, sweep in entries:
        b = replace(base, **overrides)
        if name == "gaff_mechanism":
            configs = [
                replace(b, stages=st, se_ratio=r, guidance=g, merge=m)
                for st, r, g, m in gaff_phase2
            ]
            reports = []
            for c in configs:
                try:
                    reports.append(run_single(c))
                except TrifuseError as e:
                    reports.append(RunReport(config=c.to_dict(), error=str(e)))
            results[name] = reports
        else:
            results[name] = run_grid(b, sweep)
    return results
