"""Monte Carlo symbol-error-rate campaigns.

Every trial owns the random stream ``(seed, snr_index, trial)``, so all
detectors see the same channel, symbols and noise (paired comparison) and
the integer error counts do not depend on how trials are spread over
workers. Trials are processed in fixed-size chunks; early stopping is
decided per detector in chunk order.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from lamai.constellation import Constellation, load_json, make_standard
from lamai.detector import DETECTORS
from lamai.errors import ConfigurationError
from lamai.simulation import SystemConfig, sample_batch, trial_rng
from lamai.state_evolution import PsiSpec, predicted_ser

__all__ = [
    "CampaignConfig",
    "SerRecord",
    "run_campaign",
    "compare_to_se",
    "emit_results",
    "read_json_results",
    "CSV_COLUMNS",
    "default_output_dir",
]

CSV_COLUMNS = ("detector", "snr_db", "evm_db", "trials", "errors", "ser", "stderr")
DIVERGENCE_FLAG = 0.01


@dataclass(frozen=True)
class CampaignConfig:
    """Everything needed to reproduce one SER sweep.

    ``snr_db`` is derived from the start/stop/step triple (stop inclusive).
    A point stops for a detector once it has ``min_errors`` symbol errors
    or ``max_trials`` trials.
    """

    mr: int = 128
    mt: int = 8
    constellation: str = "QPSK"
    snr_start: float = 0.0
    snr_stop: float = 20.0
    snr_step: float = 2.0
    evm_db: float = -10.0
    detectors: tuple = ("lama-i", "lama", "lama-whitened")
    tmax: int = 10
    max_trials: int = 100_000
    min_errors: int = 200
    seed: int = 0
    chunk: int = 250
    output: Optional[str] = None

    def __post_init__(self):
        if self.max_trials < 1 or self.chunk < 1 or self.min_errors < 1:
            raise ConfigurationError("trial counts must be positive")
        if self.snr_step <= 0:
            raise ConfigurationError("snr_step must be positive")
        if not self.detectors:
            raise ConfigurationError("no detectors selected")
        unknown = set(self.detectors) - set(DETECTORS)
        if unknown:
            raise ConfigurationError(f"unknown detectors: {sorted(unknown)}")
        if self.tmax < 1:
            raise ConfigurationError("tmax must be >= 1")
        object.__setattr__(self, "detectors", tuple(self.detectors))

    @property
    def snr_points(self) -> List[float]:
        n = int(math.floor((self.snr_stop - self.snr_start) / self.snr_step + 1e-9)) + 1
        return [round(self.snr_start + k * self.snr_step, 10) for k in range(max(n, 0))]

    @property
    def beta(self) -> float:
        return self.mt / self.mr

    def get_constellation(self) -> Constellation:
        if str(self.constellation).lower().endswith(".json"):
            return load_json(self.constellation)
        return make_standard(self.constellation)

    def system(self, snr_db: float) -> SystemConfig:
        return SystemConfig.from_db(self.mr, self.mt, snr_db, self.evm_db, self.get_constellation(), self.seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["detectors"] = list(self.detectors)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CampaignConfig":
        d = dict(d)
        if "detectors" in d:
            d["detectors"] = tuple(d["detectors"])
        return cls(**d)


@dataclass
class SerRecord:
    """Aggregated counts for one (detector, SNR) point."""

    detector: str
    snr_db: float
    evm_db: float
    trials: int
    errors: int
    mt: int
    diverged: int = 0
    flagged: bool = False

    def __post_init__(self):
        if not 0 <= self.errors <= self.trials * self.mt:
            raise ConfigurationError("error count out of range")

    @property
    def symbols(self) -> int:
        return self.trials * self.mt

    @property
    def ser(self) -> float:
        return self.errors / self.symbols if self.symbols else 0.0

    @property
    def stderr(self) -> float:
        """Binomial standard error of ``ser``."""
        if not self.symbols:
            return 0.0
        p = self.ser
        return math.sqrt(p * (1.0 - p) / self.symbols)

    def row(self) -> dict:
        return {
            "detector": self.detector,
            "snr_db": self.snr_db,
            "evm_db": self.evm_db,
            "trials": self.trials,
            "errors": self.errors,
            "ser": self.ser,
            "stderr": self.stderr,
        }


def _run_chunk(cfg: CampaignConfig, point: int, lo: int, hi: int, detectors: Sequence[str]):
    """Error and divergence counts of each detector on trials ``lo..hi-1``."""
    system = cfg.system(cfg.snr_points[point])
    batch = sample_batch(system, [trial_rng(cfg.seed, point, t) for t in range(lo, hi)])
    out = {}
    for name in detectors:
        res = DETECTORS[name](batch.y, batch.h, system, tmax=cfg.tmax, raise_on_divergence=False)
        errors = int(np.count_nonzero(res.s_idx != batch.s_idx))
        out[name] = (errors, int(np.count_nonzero(res.diverged)))
    return out


def _chunks(cfg: CampaignConfig):
    for lo in range(0, cfg.max_trials, cfg.chunk):
        yield lo, min(lo + cfg.chunk, cfg.max_trials)


def run_campaign(cfg: CampaignConfig, workers: int = 1) -> List[SerRecord]:
    """Run the sweep and return one record per (SNR point, detector).

    With ``workers > 1`` up to ``workers`` chunks are evaluated ahead in a
    process pool; results of chunks past a detector's stopping point are
    discarded, so counts match the serial run exactly.
    """
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    records = []
    try:
        for p, snr in enumerate(cfg.snr_points):
            tally = {d: [0, 0, 0] for d in cfg.detectors}  # trials, errors, diverged
            active = list(cfg.detectors)
            chunks = list(_chunks(cfg))
            k = 0
            while active and k < len(chunks):
                wave = chunks[k:k + workers]
                if pool is None:
                    results = [_run_chunk(cfg, p, lo, hi, active) for lo, hi in wave]
                else:
                    futs = [pool.submit(_run_chunk, cfg, p, lo, hi, tuple(active)) for lo, hi in wave]
                    results = [f.result() for f in futs]
                for (lo, hi), res in zip(wave, results):
                    for d in list(active):
                        t = tally[d]
                        t[0] += hi - lo
                        t[1] += res[d][0]
                        t[2] += res[d][1]
                        if t[1] >= cfg.min_errors or t[0] >= cfg.max_trials:
                            active.remove(d)
                k += len(wave)
            for d in cfg.detectors:
                trials, errors, div = tally[d]
                records.append(SerRecord(d, snr, cfg.evm_db, trials, errors, cfg.mt, div,
                                         div > DIVERGENCE_FLAG * trials))
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def compare_to_se(cfg: CampaignConfig, records: Iterable[SerRecord], samples: int = 200_000) -> List[dict]:
    """Side-by-side Monte Carlo SER and fixed-point predicted SER.

    The prediction uses the impairment-aware state evolution at each SNR
    point; with ``evm_db = -inf`` it is the unimpaired prediction.
    """
    c = cfg.get_constellation()
    cache = {}
    rows = []
    for r in records:
        if r.snr_db not in cache:
            system = cfg.system(r.snr_db)
            spec = PsiSpec(c, system.n_t, samples=samples, seed=cfg.seed)
            cache[r.snr_db] = predicted_ser(spec, system.beta, system.n0)
        pred = cache[r.snr_db]
        rows.append({
            "detector": r.detector,
            "snr_db": r.snr_db,
            "evm_db": r.evm_db,
            "ser": r.ser,
            "stderr": r.stderr,
            "predicted_ser": pred,
            "rel_dev": (r.ser - pred) / pred if pred > 0 else math.nan,
        })
    return rows


def _records_payload(records, cfg):
    return {
        "seed": cfg.seed if cfg is not None else None,
        "config": cfg.to_dict() if cfg is not None else None,
        "records": [asdict(r) for r in records],
    }


def emit_results(records: Sequence[SerRecord], path, fmt: Optional[str] = None,
                 cfg: Optional[CampaignConfig] = None) -> Path:
    """Write records as CSV (fixed column order) or JSON (records, config, seed).

    ``fmt`` defaults to the file suffix.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("csv", "json"):
        raise ConfigurationError(f"unsupported format {fmt!r}")
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for r in records:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.row().items()})
    else:
        with open(path, "w") as fh:
            json.dump(_records_payload(records, cfg), fh, indent=2)
    return path


def read_json_results(path):
    """Inverse of the JSON branch of :func:`emit_results`: ``(records, config)``."""
    with open(path) as fh:
        data = json.load(fh)
    cfg = CampaignConfig.from_dict(data["config"]) if data.get("config") else None
    return [SerRecord(**r) for r in data["records"]], cfg


def default_output_dir() -> Path:
    return Path(os.environ.get("LAMAI_OUTPUT_DIR", "."))
