import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import statistics
import struct
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import torch
from tqdm.auto import tqdm

from ..errors import InvalidConfig
from ..mechanisms import pg
from ..mechanisms.base import FrequencyOracle
from ..mechanisms.baselines import RrOracle, SsOracle
from ..mechanisms.hpg import HpgOracle
from ..mechanisms.pg import PgOracle
from ..mechanisms.pirappor import PiRapporOracle
from ..mechanisms.pubcoin import HpgPubOracle, PgPubOracle
from .config import MECHANISM_NAMES, ExperimentConfig

logger = logging.getLogger("ldp_freq")
logger.propagate = False
logger.setLevel(logging.INFO)
sh = logging.StreamHandler()
sh.setFormatter(logging.Formatter("[ldp-freq] %(levelname)s - %(message)s"))
logger.addHandler(sh)

SEED_MASK = 2**63 - 1
SWEEP_TRIALS = 10
BENCH_REPEATS = 5
BENCH_HPG_Q = 5
BENCH_DECODERS = ("pg-dp", "pg-naive", "hpg", "pirappor-dp")

MECHANISMS = {
    "pg": PgOracle,
    "hpg": HpgOracle,
    "pirappor": PiRapporOracle,
    "rr": RrOracle,
    "ss": SsOracle,
    "pg-pub": PgPubOracle,
    "hpg-pub": HpgPubOracle,
}
assert tuple(MECHANISMS) == MECHANISM_NAMES

RUN_COLUMNS = ("trial", "mse", "linf", "encode_ns", "decode_ns")
SWEEP_COLUMNS = ("epsilon", "mean_mse")
BENCH_COLUMNS = ("decoder", "median_ns")
CDF_COLUMNS = ("percentile", "mse")


@dataclass(frozen=True)
class TrialResult:
    trial: int
    mse: float
    linf: float
    encode_ns: int
    # decode only; aggregating messages into counts is not timed
    decode_ns: int


def derive_seed(seed: int, stream: int) -> int:
    """63-bit seed of an independent random stream."""
    digest = hashlib.blake2b(struct.pack("<QQ", seed, stream), digest_size=8).digest()
    return int.from_bytes(digest, "little") & SEED_MASK


def make_oracle(config: ExperimentConfig) -> FrequencyOracle:
    oracle = MECHANISMS[config.mechanism].from_config(config.epsilon, config.k, q=config.q, t=config.t, h=config.h)
    logger.info(f"Using {oracle.describe()}")
    return oracle


def generate_inputs(config: ExperimentConfig, generator: torch.Generator) -> torch.Tensor:
    """n input values, all 0 for spike or i.i.d. with P(i) ~ (i+1)^-s for zipf."""
    if config.distribution == "spike":
        return torch.zeros(config.n, dtype=torch.long)
    weights = torch.arange(1, config.k + 1, dtype=torch.float64) ** -config.zipf_s
    cumulative = torch.cumsum(weights, dim=0)
    cumulative /= cumulative[-1].clone()
    draws = torch.rand(config.n, generator=generator, dtype=torch.float64)
    return torch.searchsorted(cumulative, draws, right=True).clamp(max=config.k - 1)


class TrialRunner:
    def __init__(self, config: ExperimentConfig, oracle: Optional[FrequencyOracle] = None):
        self.config = config
        self.oracle = make_oracle(config) if oracle is None else oracle

    def run_trial(self, trial: int) -> TrialResult:
        config = self.config
        seed = derive_seed(config.seed, trial)
        public_seed = derive_seed(config.shared_seed, trial)
        logger.debug(f"Trial {trial}: seed={seed}, public_seed={public_seed}")
        generator = torch.Generator().manual_seed(seed)

        values = generate_inputs(config, generator)
        start = time.perf_counter_ns()
        messages = self.oracle.encode_batch(values, generator, public_seed)
        encoded = time.perf_counter_ns()
        counts = self.oracle.aggregate(messages, public_seed)
        aggregated = time.perf_counter_ns()
        estimate = self.oracle.decode(counts)
        decoded = time.perf_counter_ns()

        truth = torch.bincount(values, minlength=config.k).to(torch.float64)
        error = estimate - truth
        mse = float((error**2).mean())
        linf = float(error.abs().max())
        if not (math.isfinite(mse) and math.isfinite(linf)):
            logger.warning(f"Trial {trial} produced non-finite error (mse={mse}, linf={linf})")
        return TrialResult(trial, mse, linf, encoded - start, decoded - aggregated)

    def __call__(self) -> List[TrialResult]:
        config = self.config
        progress_bar = tqdm(
            total=config.trials,
            desc=f"{config.mechanism} trials",
            unit="trial",
            disable=not config.progress,
        )
        results = [None] * config.trials
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            for result in pool.map(self.run_trial, range(config.trials)):
                results[result.trial] = result
                progress_bar.update(1)
        progress_bar.close()
        return results


def run_trials(config: ExperimentConfig, oracle: Optional[FrequencyOracle] = None) -> List[TrialResult]:
    logger.info(f"Running {config.trials} trials of {config.mechanism} (eps={config.epsilon}, k={config.k}, n={config.n})")
    results = TrialRunner(config, oracle)()
    logger.info(f"Mean mse {statistics.fmean(r.mse for r in results):.6g} over {len(results)} trials")
    return results


def emit_cdf(results: Sequence[TrialResult]) -> List[Tuple[float, float]]:
    """(percentile, mse): the smallest mse reached by at least that share of trials."""
    if not results:
        raise ValueError("Need at least one trial result")
    values = sorted(r.mse for r in results)
    return [(100.0 * (i + 1) / len(values), mse) for i, mse in enumerate(values)]


def sweep_epsilon(config: ExperimentConfig, epsilons: Sequence[float]) -> List[Tuple[float, float]]:
    """Mean mse over SWEEP_TRIALS trials per epsilon, parameters re-derived each time."""
    table = []
    for epsilon in epsilons:
        if epsilon <= 0:
            raise InvalidConfig(f"epsilon must be positive, got {epsilon}")
        point = dataclasses.replace(config, epsilon=epsilon, trials=SWEEP_TRIALS)
        results = TrialRunner(point)()
        table.append((epsilon, statistics.fmean(r.mse for r in results)))
        logger.info(f"eps={epsilon}: mean mse {table[-1][1]:.6g}")
    return table


def _bench_case(name: str, config: ExperimentConfig, hpg_q: int) -> Tuple[FrequencyOracle, Callable]:
    eps, k = config.epsilon, config.k
    if name in ("pg-dp", "pg-naive"):
        oracle = PgOracle.from_config(eps, k)
        decode = pg.decode_dp if name == "pg-dp" else pg.decode_naive
        return oracle, lambda y: decode(oracle.params, y)
    oracle = HpgOracle.from_config(eps, k, q=hpg_q) if name == "hpg" else PiRapporOracle.from_config(eps, k)
    return oracle, oracle.decode


def bench_decode(
    config: ExperimentConfig,
    decoders: Optional[Sequence[str]] = None,
    repeats: int = BENCH_REPEATS,
    hpg_q: int = BENCH_HPG_Q,
) -> List[Tuple[str, int]]:
    """Median decode time in nanoseconds per decoder on one fixed count vector."""
    decoders = list(BENCH_DECODERS) if decoders is None else list(decoders)
    unknown = set(decoders) - set(BENCH_DECODERS)
    if unknown:
        raise InvalidConfig(f"Unknown decoders {sorted(unknown)}, expected some of {BENCH_DECODERS}")

    report = []
    for name in decoders:
        oracle, decode = _bench_case(name, config, hpg_q)
        generator = torch.Generator().manual_seed(derive_seed(config.seed, 0))
        counts = oracle.aggregate(oracle.encode_batch(generate_inputs(config, generator), generator))

        timings = []
        for _ in range(repeats):
            start = time.perf_counter_ns()
            decode(counts)
            timings.append(time.perf_counter_ns() - start)
        report.append((name, int(statistics.median(timings))))
        logger.info(f"{name}: median decode {report[-1][1] / 1e9:.3f}s over {repeats} runs")
    return report


def write_table(rows: Sequence[Sequence], columns: Sequence[str], out: Optional[Path] = None, output_format: str = "csv"):
    """CSV with a fixed header, or JSON as an array of objects."""
    records = [dict(zip(columns, row)) for row in rows]
    stream = io.StringIO() if out is not None else sys.stdout
    if output_format == "json":
        json.dump(records, stream, indent=2)
        stream.write("\n")
    else:
        writer = csv.DictWriter(stream, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(records)
    if out is not None:
        Path(out).write_text(stream.getvalue())
        logger.info(f"Wrote {len(records)} rows to {out}")


def trial_rows(results: Sequence[TrialResult]) -> List[Tuple]:
    return [dataclasses.astuple(r) for r in results]
