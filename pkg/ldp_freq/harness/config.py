from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional, Tuple

from ..errors import InvalidConfig
from ..ffield import is_prime

I_INF = 2**31 - 1
U64_MAX = 2**64 - 1
F_INF = 1e38
F_EPS = 1e-9

MECHANISM_NAMES = ("pg", "hpg", "pirappor", "rr", "ss", "pg-pub", "hpg-pub")
PUBLIC_COIN_NAMES = {"pg": "pg-pub", "hpg": "hpg-pub"}
DISTRIBUTIONS = ("spike", "zipf")
OUTPUT_FORMATS = ("csv", "json")

# Declarative option table. The CLI builds its parsers from it and
# ExperimentConfig checks ranges against it.
OPTIONS = {
    "mechanism": (list(MECHANISM_NAMES), {"default": "pg", "help": "frequency oracle to run"}),
    "epsilon": ("FLOAT", {"default": 5.0, "min": F_EPS, "max": 700.0, "help": "privacy parameter"}),
    "k": ("INT", {"default": 22_000, "min": 2, "max": I_INF, "help": "universe size"}),
    "n": ("INT", {"default": 10_000, "min": 1, "max": I_INF, "help": "number of users"}),
    "trials": ("INT", {"default": 300, "min": 1, "max": I_INF, "help": "independent repetitions"}),
    "distribution": (list(DISTRIBUTIONS), {"default": "spike", "help": "spike, zipf or zipf:S"}),
    "zipf_s": ("FLOAT", {"default": 1.0, "min": 0.0, "max": F_INF, "help": "zipf exponent"}),
    "seed": ("INT", {"default": 0, "min": 0, "max": U64_MAX, "help": "root seed of every random stream"}),
    "q": ("INT", {"default": None, "min": 2, "max": 2**16, "help": "field size override"}),
    "t": ("INT", {"default": None, "min": 1, "max": 64, "help": "dimension override"}),
    "h": ("INT", {"default": None, "min": 1, "max": 2**20, "help": "hpg block count override"}),
    "public_seed": ("INT", {"default": None, "min": 0, "max": U64_MAX, "help": "shared seed, defaults to --seed"}),
    "out": ("PATH", {"default": None, "help": "output file, stdout when omitted"}),
    "output_format": (list(OUTPUT_FORMATS), {"default": None, "help": "inferred from the --out suffix"}),
    "threads": ("INT", {"default": 1, "min": 1, "max": 1024, "help": "trial worker threads"}),
    "progress": ("BOOLEAN", {"default": True, "help": "show a progress bar"}),
}


def parse_distribution(text: str) -> Tuple[str, Optional[float]]:
    """"spike" -> ("spike", None), "zipf:0.1" -> ("zipf", 0.1)."""
    name, _, exponent = text.partition(":")
    if name not in DISTRIBUTIONS:
        raise InvalidConfig(f"Unknown distribution {text!r}, expected one of {DISTRIBUTIONS}")
    if not exponent:
        return name, None
    if name != "zipf":
        raise InvalidConfig(f"Only zipf takes an exponent, got {text!r}")
    try:
        return name, float(exponent)
    except ValueError as e:
        raise InvalidConfig(f"Bad zipf exponent in {text!r}") from e


def check_option(name: str, value):
    kind, opt = OPTIONS[name]
    if value is None:
        if opt.get("default") is not None:
            raise InvalidConfig(f"{name} is required")
        return
    if isinstance(kind, list):
        if value not in kind:
            raise InvalidConfig(f"{name} must be one of {kind}, got {value!r}")
    elif "min" in opt and not opt["min"] <= value <= opt["max"]:
        raise InvalidConfig(f"{name} must lie in [{opt['min']}, {opt['max']}], got {value}")


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: str = "pg"
    epsilon: float = 5.0
    k: int = 22_000
    n: int = 10_000
    trials: int = 300
    distribution: str = "spike"
    zipf_s: float = 1.0
    seed: int = 0
    q: Optional[int] = None
    t: Optional[int] = None
    h: Optional[int] = None
    public_seed: Optional[int] = None
    out: Optional[Path] = None
    output_format: Optional[str] = None
    threads: int = 1
    progress: bool = True

    def __post_init__(self):
        for f in fields(self):
            check_option(f.name, getattr(self, f.name))
        if self.q is not None and not is_prime(self.q):
            raise InvalidConfig(f"q={self.q} is not prime")
        if self.mechanism in ("hpg", "hpg-pub") and self.q is None:
            raise InvalidConfig("hpg needs an explicit field size --q")
        if self.h is not None and self.mechanism not in ("hpg", "hpg-pub"):
            raise InvalidConfig(f"--h only applies to hpg, not {self.mechanism}")

    @property
    def shared_seed(self) -> int:
        return self.seed if self.public_seed is None else self.public_seed

    @property
    def format(self) -> str:
        if self.output_format is not None:
            return self.output_format
        if self.out is not None and Path(self.out).suffix.lower() == ".json":
            return "json"
        return "csv"
