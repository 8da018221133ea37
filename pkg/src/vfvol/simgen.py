"""Simulated high-frequency prices with a volume covariate, aggregated weekly.

Daily log increments ``s_j ~ N(mu_daily, sigma_daily)`` drive the price

    linear:       x_i = x0 * exp(sum_{j<=i} s_j) - psi * u_i
    exponential:  x_i = x0 * exp(sum_{j<=i} s_j - psi * u_i)

where ``u`` is uniform noise on (-1, 1), either independent or AR(1) with
coefficient 0.5 and innovations scaled to keep the marginal variance at 1/3.
Daily volume is ``1e6 * |u_i|``; prices and volumes are then aggregated into
blocks of five exactly as real data are (see :mod:`vfvol.dataset`).
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import DataError, RawDailySeries, VaryingFrequencyDataset, build_dataset

logger = logging.getLogger(__name__)

PERIOD = 5
TRADING_DAYS = 252
VOLUME_SCALE = 1_000_000.0
AR_COEF = 0.5
MAX_REGENERATIONS = 100

INDEPENDENT = "iid"
AR1 = "ar1"
LINEAR = "linear"
EXPONENTIAL = "exponential"

GRID_LENGTHS = (255, 510, 1530)
GRID_DRIFT_VOL = ((0.20, 0.30), (0.40, 0.45), (0.80, 0.60))
GRID_WEIGHTS = (0.20, 0.50, 0.70)
GRID_DEPENDENCE = (INDEPENDENT, AR1)
GRID_FORMS = (LINEAR, EXPONENTIAL)


class ScenarioError(ValueError):
    pass


def convert_frequency(mu_annual: float, sigma_annual: float) -> tuple[float, float]:
    """Annual drift/volatility to daily levels over 252 trading days."""
    if not sigma_annual > 0:
        raise ScenarioError("sigma_annual must be positive")
    return mu_annual / TRADING_DAYS, sigma_annual / math.sqrt(TRADING_DAYS)


@dataclass(frozen=True)
class ScenarioConfig:
    T: int = 255
    mu_annual: float = 0.20
    sigma_annual: float = 0.30
    psi_weight: float = 0.50
    dependence: str = INDEPENDENT
    form: str = LINEAR
    x0: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        problems = self.problems()
        if problems:
            raise ScenarioError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.T % PERIOD or self.T < 3 * PERIOD:
            out.append(
                f"T={self.T} must be a multiple of {PERIOD} and at least {3 * PERIOD} "
                f"(grid lengths: {', '.join(map(str, GRID_LENGTHS))})"
            )
        if not self.sigma_annual > 0:
            out.append(f"sigma_annual={self.sigma_annual} must be positive")
        if not 0 <= self.psi_weight < 1:
            out.append(
                f"psi_weight={self.psi_weight} must lie in [0, 1) "
                f"(grid weights: {', '.join(map(str, GRID_WEIGHTS))})"
            )
        if self.dependence not in GRID_DEPENDENCE:
            out.append(f"dependence={self.dependence!r} not in {GRID_DEPENDENCE}")
        if self.form not in GRID_FORMS:
            out.append(f"form={self.form!r} not in {GRID_FORMS}")
        if not self.x0 > 0:
            out.append("x0 must be positive")
        return out

    @property
    def in_grid(self) -> bool:
        return (
            self.T in GRID_LENGTHS
            and (self.mu_annual, self.sigma_annual) in GRID_DRIFT_VOL
            and self.psi_weight in GRID_WEIGHTS
        )

    @property
    def scenario_id(self) -> str:
        return (
            f"T{self.T}_mu{self.mu_annual:.2f}_sig{self.sigma_annual:.2f}"
            f"_psi{self.psi_weight:.2f}_{self.dependence}_{self.form}"
        )

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=int(seed))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimulatedData:
    scenario: ScenarioConfig
    x: np.ndarray
    u: np.ndarray
    s: np.ndarray
    volume: np.ndarray
    dataset: VaryingFrequencyDataset
    seed_used: int
    regenerations: int = 0

    @property
    def y(self) -> np.ndarray:
        return self.dataset.y

    @property
    def v(self) -> np.ndarray:
        return self.dataset.v


def draw_u(rng: np.random.Generator, T: int, dependence: str) -> np.ndarray:
    eps = rng.uniform(-1.0, 1.0, T)
    if dependence == INDEPENDENT:
        return eps
    u = np.empty(T)
    u[0] = eps[0]
    scale = math.sqrt(1.0 - AR_COEF**2)
    for i in range(1, T):
        u[i] = AR_COEF * u[i - 1] + scale * eps[i]
    return u


def price_path(s: np.ndarray, u: np.ndarray, psi: float, form: str, x0: float) -> np.ndarray:
    cum = np.cumsum(s)
    if form == LINEAR:
        return x0 * np.exp(cum) - psi * u
    return x0 * np.exp(cum - psi * u)


def generate(cfg: ScenarioConfig) -> SimulatedData:
    """Simulate one replicate; regenerates with ``seed + 1`` on degenerate draws.

    A draw is degenerate when a price is nonpositive or a period has zero
    total volume.  The number of regenerations is reported on the result.
    """
    mu_d, sig_d = convert_frequency(cfg.mu_annual, cfg.sigma_annual)
    seed = cfg.seed
    for attempt in range(MAX_REGENERATIONS + 1):
        rng = np.random.default_rng(seed)
        s = rng.normal(mu_d, sig_d, cfg.T)
        u = draw_u(rng, cfg.T, cfg.dependence)
        x = price_path(s, u, cfg.psi_weight, cfg.form, cfg.x0)
        w = VOLUME_SCALE * np.abs(u)
        try:
            ds = build_dataset(RawDailySeries(x, w), PERIOD)
        except DataError as exc:
            logger.info("seed %d degenerate (%s); regenerating", seed, exc)
            seed += 1
            continue
        return SimulatedData(cfg, x, u, s, w, ds, seed, attempt)
    raise ScenarioError(
        f"no valid draw for {cfg.scenario_id} after {MAX_REGENERATIONS} regenerations"
    )


def scenario_grid(seed: int = 0) -> list[ScenarioConfig]:
    """Every grid combination: 3 x 3 x 3 x 2 x 2 = 108 scenarios."""
    out = []
    for T, (mu, sig), psi, dep, form in itertools.product(
        GRID_LENGTHS, GRID_DRIFT_VOL, GRID_WEIGHTS, GRID_DEPENDENCE, GRID_FORMS
    ):
        out.append(ScenarioConfig(T, mu, sig, psi, dep, form, seed=seed))
    return out


def replicate_seed(master_seed: int, scenario_index: int, replicate: int) -> int:
    """Independent per-replicate seed derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(scenario_index), int(replicate)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


_ID_PATTERN = re.compile(
    r"^T(?P<T>\d+)_mu(?P<mu>-?[\d.]+)_sig(?P<sig>[\d.]+)_psi(?P<psi>[\d.]+)"
    r"_(?P<dep>[a-z0-9]+)_(?P<form>[a-z]+)$"
)


def parse_scenario_id(text: str, seed: int = 0) -> ScenarioConfig:
    """Inverse of :attr:`ScenarioConfig.scenario_id`."""
    match = _ID_PATTERN.match(text.strip())
    if match is None:
        raise ScenarioError(
            f"cannot parse scenario id {text!r}; expected e.g. "
            "T255_mu0.20_sig0.30_psi0.50_iid_linear"
        )
    g = match.groupdict()
    return ScenarioConfig(
        T=int(g["T"]),
        mu_annual=float(g["mu"]),
        sigma_annual=float(g["sig"]),
        psi_weight=float(g["psi"]),
        dependence=g["dep"],
        form=g["form"],
        seed=seed,
    )
