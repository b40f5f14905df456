"""Market model, preferences, and parameter-validity checks.

Factor: dR = (a - b R) ds + sigma R^p dB^R  (CKLS; CIR at p=1/2, OU at p=0).
Stock:  dS/S = (r0 + delta R^{(1+2*kappa*alpha)/(2*alpha)}) ds + R^{1/(2*alpha)} dB,
with kappa = 1 - p and corr(dB, dB^R) = rho_corr.  Preferences carry a terminal
weight rho(s), a running kernel eta(s,tau) and a terminal kernel mu(s,T); every
downstream formula consumes eta and mu only through lam(s,tau) = eta/mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TRIANGLE_VERTICES = ((0.0, 0.0), (0.0, 1.0), (1.0, 1.0))  # (s/T, tau/T)


@dataclass(frozen=True)
class CklsParams:
    a: float
    b: float
    sigma: float
    p: float
    r0_factor: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.sigma < 0.0:
            raise ValueError("sigma must be nonnegative")
        if self.r0_factor <= 0.0:
            raise ValueError("initial factor value must be positive")
        if 0.0 < self.p < 1.0 and self.a <= 0.0:
            raise ValueError("a must be positive for p in (0, 1)")
        if self.p == 1.0 and (self.a < 0.0 or self.b >= 0.0):
            raise ValueError("p = 1 requires a >= 0 and b < 0")

    @property
    def kappa(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True)
class StockSpec:
    r0: float
    delta: float
    alpha: float = -1.0
    rho_corr: float = 0.0
    ou_limit: bool = False  # sigma_stock == 1 exactly (alpha -> inf limit)

    def __post_init__(self):
        if self.alpha == 0.0:
            raise ValueError("alpha must be nonzero")
        if not -1.0 < self.rho_corr < 1.0:
            raise ValueError("rho_corr must lie in (-1, 1)")


@dataclass(frozen=True)
class RhoWeight:
    """Terminal preference weight rho(s) with an evaluable derivative."""

    kind: str = "constant"  # constant | exponential | grid
    value: float = 1.0      # level (constant) or multiplier (exponential)
    rate: float = 0.0       # rho(s) = value * exp(rate * s)
    s_grid: tuple = ()
    v_grid: tuple = ()
    d_grid: tuple = ()      # optional derivative values at s_grid

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "grid"):
            raise ValueError(f"unknown rho kind {self.kind!r}")
        if self.kind == "grid":
            if len(self.s_grid) < 2 or len(self.s_grid) != len(self.v_grid):
                raise ValueError("grid rho needs matching s/value grids, length >= 2")
            if self.d_grid and len(self.d_grid) != len(self.s_grid):
                raise ValueError("derivative grid length mismatch")

    def rho(self, s):
        if self.kind == "constant":
            return self.value * np.ones_like(np.asarray(s, dtype=float))
        if self.kind == "exponential":
            return self.value * np.exp(self.rate * np.asarray(s, dtype=float))
        return np.interp(s, self.s_grid, self.v_grid)

    def rho_t(self, s):
        if self.kind == "constant":
            return np.zeros_like(np.asarray(s, dtype=float))
        if self.kind == "exponential":
            return self.rate * self.rho(s)
        if self.d_grid:
            return np.interp(s, self.s_grid, self.d_grid)
        # piecewise-linear fallback: interpolate one-sided segment slopes
        sg = np.asarray(self.s_grid, dtype=float)
        vg = np.asarray(self.v_grid, dtype=float)
        slopes = np.diff(vg) / np.diff(sg)
        mids = 0.5 * (sg[:-1] + sg[1:])
        return np.interp(s, mids, slopes)

    def sup_abs(self, horizon: float) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "exponential":
            return max(abs(self.rho(0.0)), abs(self.rho(horizon)))
        return float(np.max(np.abs(self.v_grid)))


@dataclass(frozen=True)
class EtaKernel:
    """Running-discount kernel eta(s, tau)."""

    kind: str = "zero"  # zero | constant | exponential | exponential_terminal
    value: float = 1.0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "exponential", "exponential_terminal"):
            raise ValueError(f"unknown eta kind {self.kind!r}")


@dataclass(frozen=True)
class MuKernel:
    """Terminal-discount kernel mu(s, T)."""

    kind: str = "one"  # one | exponential
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("one", "exponential"):
            raise ValueError(f"unknown mu kind {self.kind!r}")


@dataclass(frozen=True)
class LambdaRatio:
    """lam(s, tau) = coef * exp(ps*s + ptau*tau + p0) on 0 <= s <= tau <= T.

    Every supported (eta, mu) tag pair lands in this affine-exponent family,
    so lam, lam_t, the tau-integral, and the supremum bound are all exact.
    """

    coef: float
    ps: float
    ptau: float
    p0: float
    horizon: float

    def lam(self, s, tau):
        if self.coef == 0.0:
            return np.zeros(np.broadcast(np.asarray(s), np.asarray(tau)).shape)
        return self.coef * np.exp(self.ps * np.asarray(s, dtype=float)
                                  + self.ptau * np.asarray(tau, dtype=float) + self.p0)

    def lam_t(self, s, tau):
        return self.ps * self.lam(s, tau)

    def integral(self, s):
        """Exact integral of lam(s, tau) dtau over tau in [s, horizon]."""
        s = np.asarray(s, dtype=float)
        if self.coef == 0.0:
            return np.zeros_like(s)
        front = self.coef * np.exp(self.ps * s + self.p0)
        if self.ptau == 0.0:
            return front * (self.horizon - s)
        return front * (np.exp(self.ptau * self.horizon) - np.exp(self.ptau * s)) / self.ptau

    def sup_abs(self) -> float:
        if self.coef == 0.0:
            return 0.0
        best = -math.inf
        for fs, ft in _TRIANGLE_VERTICES:
            best = max(best, self.ps * fs * self.horizon + self.ptau * ft * self.horizon)
        return abs(self.coef) * math.exp(best + self.p0)

    def sup_abs_t(self) -> float:
        return abs(self.ps) * self.sup_abs()

    @property
    def is_zero(self) -> bool:
        return self.coef == 0.0


@dataclass(frozen=True)
class DiscountPreference:
    gamma: float
    rho_weight: RhoWeight = RhoWeight()
    eta: EtaKernel = EtaKernel()
    mu_term: MuKernel = MuKernel()

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")

    def lambda_ratio(self, horizon: float) -> LambdaRatio:
        """Build lam = eta/mu on [0, horizon] in the affine-exponent form."""
        e = self.eta
        if e.kind == "zero":
            coef, ps, ptau, p0 = 0.0, 0.0, 0.0, 0.0
        elif e.kind == "constant":
            coef, ps, ptau, p0 = e.value, 0.0, 0.0, 0.0
        elif e.kind == "exponential":  # exp(-rate*(tau-s))
            coef, ps, ptau, p0 = 1.0, e.rate, -e.rate, 0.0
        else:  # exponential_terminal: exp(-rate*(tau-horizon))
            coef, ps, ptau, p0 = 1.0, 0.0, -e.rate, e.rate * horizon
        if self.mu_term.kind == "exponential" and coef != 0.0:
            # divide by exp(-rate*(horizon - s))
            r2 = self.mu_term.rate
            ps -= r2
            p0 += r2 * horizon
        return LambdaRatio(coef, ps, ptau, p0, horizon)


@dataclass(frozen=True)
class MarketModel:
    ckls: CklsParams
    stock: StockSpec
    pref: DiscountPreference
    horizon: float

    def __post_init__(self):
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise ValueError("horizon must be positive and finite")

    @property
    def kappa(self) -> float:
        return self.ckls.kappa

    @property
    def sharpe_exponent(self) -> float:
        """Exponent on R in the excess return delta * R^(...)."""
        if self.stock.ou_limit:
            return self.kappa
        a = self.stock.alpha
        return (1.0 + 2.0 * self.kappa * a) / (2.0 * a)

    @property
    def vol_exponent(self) -> float:
        """Exponent on R in the stock volatility (0 in the OU limit)."""
        if self.stock.ou_limit:
            return 0.0
        return 1.0 / (2.0 * self.stock.alpha)

    @property
    def myopic_exponent(self) -> float:
        return self.kappa - self.vol_exponent

    def fractional_powers(self) -> bool:
        """True when some R-exponent is non-integer (needs r > 0)."""
        exps = (self.sharpe_exponent, self.vol_exponent, self.ckls.p)
        return any(e != int(e) for e in exps)

    def lambda_ratio(self) -> LambdaRatio:
        return self.pref.lambda_ratio(self.horizon)


def coefficients_at(model: MarketModel, s, r) -> dict:
    """Evaluate drift/volatility coefficients of stock and factor at (s, r)."""
    r = np.asarray(r, dtype=float)
    if model.fractional_powers() and np.any(r <= 0.0):
        raise ValueError("factor value must be positive for fractional exponents")
    stock = model.stock
    mu = stock.r0 + stock.delta * r ** model.sharpe_exponent
    sigma_stock = r ** model.vol_exponent if not stock.ou_limit else np.ones_like(r)
    return {
        "mu": mu,
        "sigma_stock": sigma_stock,
        "beta_excess": mu - stock.r0,
        "m_drift": model.ckls.a - model.ckls.b * r,
        "n_diff": model.ckls.sigma * r ** model.ckls.p,
    }


def min_beta(c: float, horizon: float) -> float:
    """Smallest admissible weight-growth exponent, with a 1.1 safety factor.

    Solves 12*m/beta + 24*m/beta**2 = 1 with m = max(c^2 T^2, 1) and returns
    1.1 times the positive root, so the strict inequality holds with margin.
    """
    if c < 0.0 or horizon <= 0.0:
        raise ValueError("need c >= 0 and positive horizon")
    m = max(c * c * horizon * horizon, 1.0)
    root = 6.0 * m + math.sqrt(36.0 * m * m + 24.0 * m)
    return 1.1 * root


def general_condition_rhs(b: float, sigma: float, kappa: float, horizon: float) -> float:
    """Moment-bound threshold b / (sigma^2 kappa (1 - exp(-2 b kappa T)))."""
    if sigma == 0.0 or kappa == 0.0:
        return math.inf
    x = 2.0 * b * kappa * horizon
    if abs(x) < 1e-14:
        return 1.0 / (2.0 * sigma * sigma * kappa * kappa * horizon)
    return b / (sigma * sigma * kappa * (-math.expm1(-x)))


def cir_condition_rhs(b: float, sigma: float, horizon: float) -> float:
    """p = 1/2 specialization: 2 b / ((1 - exp(-b T)) sigma^2)."""
    if sigma == 0.0:
        return math.inf
    x = b * horizon
    if abs(x) < 1e-14:
        return 2.0 / (sigma * sigma * horizon)
    return 2.0 * b / ((-math.expm1(-x)) * sigma * sigma)


def ou_condition_rhs(b: float, sigma: float, horizon: float) -> float:
    """p = 0 specialization: b / ((1 - exp(-2 b T)) sigma^2)."""
    if sigma == 0.0:
        return math.inf
    x = 2.0 * b * horizon
    if abs(x) < 1e-14:
        return 1.0 / (2.0 * sigma * sigma * horizon)
    return b / ((-math.expm1(-x)) * sigma * sigma)


def explosion_threshold(b: float, sigma: float, horizon: float) -> float:
    """Divergence bound 2 b^3 T^2 e^{bT} / (sigma^2 [2 e^{bT} - (1+bT)^2 - 1])."""
    if b <= 0.0 or sigma == 0.0:
        return math.inf
    bt = b * horizon
    den = sigma * sigma * (2.0 * math.exp(bt) - (1.0 + bt) ** 2 - 1.0)
    if den <= 0.0:
        return math.inf
    return 2.0 * b ** 3 * horizon ** 2 * math.exp(bt) / den


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    lhs: float
    rhs: float
    message: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            lines.append(f"[{tag}] {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} {c.message}".rstrip())
        return "\n".join(lines)


def validate_model(model: MarketModel) -> ValidationReport:
    """Run the well-posedness checks and report the computed bounds."""
    ckls, stock, T = model.ckls, model.stock, model.horizon
    lam = model.lambda_ratio()
    checks = []

    # terminal-kernel identity: shared exponential rates force lam(s, T) = 1
    if model.pref.eta.kind == "exponential" and model.pref.mu_term.kind == "exponential":
        val = float(lam.lam(0.0, T))
        checks.append(CheckResult(
            "terminal_kernel_identity", abs(val - 1.0) < 1e-12, val, 1.0,
            "lam(s, T) must equal 1 for the shared-rate exponential family"))

    c_bound = lam.sup_abs()
    beta = min_beta(c_bound, T)
    m = max(c_bound * c_bound * T * T, 1.0)
    margin = 12.0 * m / beta + 24.0 * m / (beta * beta)
    checks.append(CheckResult(
        "weight_growth", margin < 1.0, margin, 1.0,
        f"beta={beta:.6g} from lam-bound c={c_bound:.6g}"))

    lhs = beta * stock.rho_corr ** 2 * stock.delta ** 2 * T
    rhs = general_condition_rhs(ckls.b, ckls.sigma, model.kappa, T)
    checks.append(CheckResult("general_condition", lhs < rhs, lhs, rhs))

    thr = explosion_threshold(ckls.b, ckls.sigma, T)
    checks.append(CheckResult(
        "moment_explosion", lhs < thr, lhs, thr,
        "" if lhs < thr else "moment explosion: MGF of R^{2 kappa} diverges"))

    return ValidationReport(tuple(checks))


# --- benchmark calibrations used by the numerical studies -------------------

def cir_benchmark_model() -> MarketModel:
    """CIR-factor benchmark (terminal-only objective, gamma = 4)."""
    return MarketModel(
        ckls=CklsParams(a=9.4251, b=0.3374, sigma=0.6503, p=0.5, r0_factor=9.4251 / 0.3374),
        stock=StockSpec(r0=0.03, delta=0.0811, alpha=-1.0, rho_corr=-0.5),
        pref=DiscountPreference(gamma=4.0),
        horizon=1.0,
    )


def ou_benchmark_model() -> MarketModel:
    """OU-factor benchmark (stochastic Sharpe ratio, sigma_stock == 1)."""
    return MarketModel(
        ckls=CklsParams(a=0.021276, b=0.27, sigma=0.065, p=0.0, r0_factor=0.021276 / 0.27),
        stock=StockSpec(r0=0.0014, delta=1.0, alpha=1.0, rho_corr=-0.935, ou_limit=True),
        pref=DiscountPreference(gamma=4.0),
        horizon=1.0,
    )


def ckls_benchmark_model(p: float) -> MarketModel:
    """CKLS benchmark: CIR calibration with the elasticity exponent moved to p."""
    return MarketModel(
        ckls=CklsParams(a=9.4251, b=0.3374, sigma=0.6503, p=p, r0_factor=9.4251 / 0.3374),
        stock=StockSpec(r0=0.03, delta=0.0811, alpha=-1.0, rho_corr=-0.5),
        pref=DiscountPreference(gamma=4.0),
        horizon=1.0,
    )
