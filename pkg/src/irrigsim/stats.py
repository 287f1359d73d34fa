"""ANOVA, least-squares response models and surface grids on coded designs.

Terms are named by factor letters joined with ``:`` (``"evt:rt"``).  The
design may be a :class:`~irrigsim.doe.DesignMatrix` or a mapping from factor
name to a coded column.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special, stats as sps

INTERCEPT = "(Intercept)"
P_FLOOR = 1e-16


# ------------------------------------------------------------- p values


def f_p_value(f: float, df1: float, df2: float) -> float:
    """Upper-tail probability of the F distribution.

    Uses the regularized incomplete beta: P(F > f) = I_x(df2/2, df1/2)
    with x = df2 / (df2 + df1 f).
    """
    for name, v in (("f", f), ("df1", df1), ("df2", df2)):
        if not math.isfinite(v):
            raise ValueError(f"{name} must be finite, got {v}")
    if df1 < 1 or df2 < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if f < 0:
        raise ValueError("F statistic must be >= 0")
    if f == 0:
        return 1.0
    x = df2 / (df2 + df1 * f)
    return float(special.betainc(0.5 * df2, 0.5 * df1, x))


def t_p_value(t: float, df: float) -> float:
    """Two-sided p value of a t statistic."""
    if not math.isfinite(t):
        raise ValueError(f"t must be finite, got {t}")
    return f_p_value(t * t, 1, df)


def signif_code(p: float) -> str:
    for cut, code in ((0.001, "***"), (0.01, "**"), (0.05, "*"), (0.1, ".")):
        if p < cut:
            return code
    return " "


SIGNIF_LEGEND = "Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1"


def format_p(p: float) -> str:
    return f"< {P_FLOOR:g}" if p < P_FLOOR else f"{p:.3g}"


# ---------------------------------------------------------------- columns


def _columns(design) -> dict:
    if isinstance(design, Mapping):
        return {k: np.asarray(v, dtype=float) for k, v in design.items()}
    return {f: design.runs[:, i].astype(float) for i, f in enumerate(design.factors)}


def _factor_order(design) -> list:
    return list(design.keys()) if isinstance(design, Mapping) else list(design.factors)


def term_column(cols: dict, term: str) -> np.ndarray:
    parts = term.split(":")
    for p in parts:
        if p not in cols:
            raise KeyError(f"unknown factor {p!r} in term {term!r}")
    out = np.ones_like(next(iter(cols.values())))
    for p in parts:
        out = out * cols[p]
    return out


def all_terms(factors: Sequence[str]) -> list:
    """Main effects then every two-factor interaction."""
    f = list(factors)
    return f + [f"{a}:{b}" for i, a in enumerate(f) for b in f[i + 1:]]


def canonical_term(term: str, factors: Sequence[str]) -> str:
    rank = {n: i for i, n in enumerate(factors)}
    parts = term.split(":")
    return ":".join(sorted(parts, key=lambda p: rank.get(p, len(rank))))


# ------------------------------------------------------------------ ANOVA


@dataclass(frozen=True)
class AnovaRow:
    term: str
    df: int
    ss: float
    ms: float
    f: float
    p: float


@dataclass
class AnovaTable:
    rows: list
    residual_df: int
    residual_ss: float
    total_ss: float
    saturated: bool = False

    @property
    def residual_ms(self) -> float:
        return self.residual_ss / self.residual_df if self.residual_df > 0 else math.nan

    def row(self, term: str) -> AnovaRow:
        for r in self.rows:
            if r.term == term:
                return r
        a = term.split(":")
        if len(a) == 2:
            flipped = f"{a[1]}:{a[0]}"
            for r in self.rows:
                if r.term == flipped:
                    return r
        raise KeyError(term)

    @property
    def terms(self) -> list:
        return [r.term for r in self.rows]

    def to_text(self) -> str:
        w = max(len(r.term) for r in self.rows) + 2
        lines = [f"{'':<{w}}{'Df':>4} {'Sum Sq':>14} {'Mean Sq':>14} {'F value':>10} {'Pr(>F)':>11}"]
        for r in self.rows:
            lines.append(
                f"{r.term:<{w}}{r.df:>4} {r.ss:>14.6g} {r.ms:>14.6g} {r.f:>10.3f} "
                f"{format_p(r.p):>11} {signif_code(r.p)}"
            )
        lines.append(
            f"{'Residuals':<{w}}{self.residual_df:>4} {self.residual_ss:>14.6g} {self.residual_ms:>14.6g}"
        )
        lines.append("---")
        lines.append(SIGNIF_LEGEND)
        if self.saturated:
            lines.append("note: zero residual sum of squares; p values reported as 0")
        return "\n".join(lines)

    def records(self) -> list:
        out = [
            {"term": r.term, "df": r.df, "sum_sq": r.ss, "mean_sq": r.ms, "f_value": r.f,
             "p_value": 0.0 if r.p < P_FLOOR else r.p}
            for r in self.rows
        ]
        out.append({"term": "Residuals", "df": self.residual_df, "sum_sq": self.residual_ss,
                    "mean_sq": self.residual_ms, "f_value": "", "p_value": ""})
        return out


def _orthogonal_check(X: np.ndarray, tol: float = 1e-9) -> None:
    n = X.shape[0]
    G = X.T @ X
    off = G - np.diag(np.diag(G))
    if np.max(np.abs(off), initial=0.0) > tol * n or np.max(np.abs(np.diag(G) - n)) > tol * n:
        raise ValueError("design columns are not orthogonal +-1 contrasts")


def anova(design, response, terms: Optional[Sequence[str]] = None) -> AnovaTable:
    """Single-degree-of-freedom ANOVA on an orthogonal two-level design.

    ``terms`` defaults to every main effect and two-factor interaction.  Each
    term's sum of squares is ``N * coef**2`` with ``coef = column . y / N``.
    """
    cols = _columns(design)
    y = np.asarray(response, dtype=float)
    n = y.shape[0]
    if any(c.shape[0] != n for c in cols.values()):
        raise ValueError(f"response has {n} values but the design has {len(next(iter(cols.values())))} runs")
    terms = list(terms) if terms is not None else all_terms(_factor_order(design))
    _check_unique(terms)
    X = np.column_stack([term_column(cols, t) for t in terms])
    _orthogonal_check(X)
    yc = y - y.mean()
    coef = X.T @ yc / n
    ss = n * coef ** 2
    total = float(yc @ yc)
    resid = yc - X @ coef
    res_ss = float(resid @ resid)
    res_df = n - 1 - len(terms)
    if res_df < 1:
        raise ValueError(f"no residual degrees of freedom ({res_df})")
    res_ms = res_ss / res_df
    saturated = total > 0 and res_ss <= 1e-24 * max(total, 1.0)
    rows = []
    for t, s in zip(terms, ss):
        s = float(s)
        if total == 0 or s <= 1e-30 * max(total, 1.0):
            f, p = 0.0, 1.0
        elif saturated:
            f, p = math.inf, 0.0
        else:
            f = s / res_ms
            p = f_p_value(f, 1, res_df)
        rows.append(AnovaRow(t, 1, s, s, f, p))
    return AnovaTable(rows, res_df, res_ss, total, saturated)


def _check_unique(terms):
    seen = set()
    for t in terms:
        key = frozenset(t.split(":"))
        if len(key) != len(t.split(":")):
            raise ValueError(f"term {t!r} repeats a factor")
        if key in seen:
            raise ValueError(f"duplicate term {t!r}")
        seen.add(key)


def significant_terms(table: AnovaTable, alpha: float = 0.05, factors: Optional[Sequence[str]] = None) -> list:
    """Terms with p < alpha plus the main effects their interactions need."""
    picked = [r.term for r in table.rows if r.p < alpha]
    mains = [t for t in picked if ":" not in t]
    inters = [t for t in picked if ":" in t]
    for t in inters:
        for f in t.split(":"):
            if f not in mains:
                mains.append(f)
    if factors is not None:
        rank = {n: i for i, n in enumerate(factors)}
        mains.sort(key=lambda x: rank.get(x, len(rank)))
    return mains + inters


# ------------------------------------------------------------ OLS models


@dataclass(frozen=True)
class ModelTerm:
    name: str
    estimate: float
    std_error: float
    t: float
    p: float


@dataclass
class ResponseModel:
    terms: list
    r_squared: float
    adj_r_squared: float
    sigma: float
    df_resid: int
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)

    @property
    def intercept(self) -> float:
        return self.terms[0].estimate

    @property
    def names(self) -> list:
        return [t.name for t in self.terms[1:]]

    def coef(self, name: str) -> float:
        key = frozenset(name.split(":"))
        for t in self.terms:
            if t.name != INTERCEPT and frozenset(t.name.split(":")) == key:
                return t.estimate
        return 0.0

    def coefficients(self) -> dict:
        return {t.name: t.estimate for t in self.terms}

    def predict(self, point: Mapping[str, float]) -> float:
        """Prediction at a coded point; factors not given sit at 0."""
        val = self.intercept
        for t in self.terms[1:]:
            x = 1.0
            for f in t.name.split(":"):
                x *= float(point.get(f, 0.0))
            val += t.estimate * x
        return val

    def signs(self) -> dict:
        return {t.name: ("+" if t.estimate > 0 else "-" if t.estimate < 0 else "0") for t in self.terms[1:]}

    def to_text(self) -> str:
        q = np.quantile(self.residuals, [0, 0.25, 0.5, 0.75, 1.0])
        w = max(len(t.name) for t in self.terms) + 2
        lines = ["Residuals:", "     Min       1Q   Median       3Q      Max",
                 " ".join(f"{v:8.3f}" for v in q), "", "Coefficients:",
                 f"{'':<{w}}{'Estimate':>12} {'Std. Error':>12} {'t value':>10} {'Pr(>|t|)':>11}"]
        for t in self.terms:
            lines.append(
                f"{t.name:<{w}}{t.estimate:>12.3f} {t.std_error:>12.3f} {t.t:>10.3f} "
                f"{format_p(t.p):>11} {signif_code(t.p)}"
            )
        lines += ["---", SIGNIF_LEGEND, "",
                  f"Residual standard error: {self.sigma:.4g} on {self.df_resid} degrees of freedom",
                  f"Multiple R-squared: {self.r_squared:.4f}, Adjusted R-squared: {self.adj_r_squared:.4f}"]
        return "\n".join(lines)

    def records(self) -> list:
        return [
            {"term": t.name, "estimate": t.estimate, "std_error": t.std_error, "t_value": t.t,
             "p_value": 0.0 if t.p < P_FLOOR else t.p}
            for t in self.terms
        ]

    @classmethod
    def from_records(cls, records, r_squared=math.nan, adj_r_squared=math.nan, sigma=math.nan, df_resid=0):
        terms = [ModelTerm(r["term"], float(r["estimate"]), float(r.get("std_error", "nan") or "nan"),
                           float(r.get("t_value", "nan") or "nan"), float(r.get("p_value", "nan") or "nan"))
                 for r in records]
        if not terms or terms[0].name != INTERCEPT:
            raise ValueError("model records must start with the intercept")
        empty = np.zeros(0)
        return cls(terms, r_squared, adj_r_squared, sigma, df_resid, empty, empty)


def ols_fit(design, response, terms: Sequence[str]) -> ResponseModel:
    """Least-squares fit of an intercept plus ``terms``.

    On an orthogonal two-level design each coefficient is ``column . y / N``
    and is computed that way; other designs fall back to ``lstsq``.
    """
    cols = _columns(design)
    terms = list(terms)
    _check_unique(terms)
    y = np.asarray(response, dtype=float)
    n = y.shape[0]
    X = np.column_stack([np.ones(n)] + [term_column(cols, t) for t in terms])
    k = len(terms)
    gram = X.T @ X
    if np.allclose(gram, n * np.eye(k + 1), rtol=0.0, atol=1e-9 * n):
        # orthogonal +-1 contrasts: the closed form is exact
        beta = X.T @ y / n
    else:
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ beta
    resid = y - fitted
    sse = float(resid @ resid)
    yc = y - y.mean()
    sst = float(yc @ yc)
    df_resid = n - k - 1
    if df_resid < 1:
        raise ValueError("model leaves no residual degrees of freedom")
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid
    sigma2 = sse / df_resid
    cov = sigma2 * np.linalg.inv(gram)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    out = []
    for name, b, s in zip([INTERCEPT] + terms, beta, se):
        if s > 0:
            t = float(b / s)
            p = t_p_value(t, df_resid)
        else:
            t = math.inf if b != 0 else 0.0
            p = 0.0 if b != 0 else 1.0
        out.append(ModelTerm(name, float(b), float(s), t, p))
    return ResponseModel(out, r2, adj, math.sqrt(sigma2), df_resid, resid, fitted)


def normal_quantiles(residuals) -> tuple:
    """Sorted residuals and matching standard-normal quantiles (Blom positions)."""
    r = np.sort(np.asarray(residuals, dtype=float))
    n = r.size
    pos = (np.arange(1, n + 1) - 0.375) / (n + 0.25)
    return sps.norm.ppf(pos), r


# ------------------------------------------------------------- surfaces


@dataclass
class SurfaceGrid:
    x: str
    y: str
    xs: np.ndarray
    ys: np.ndarray
    z: np.ndarray  # z[i, j] at (xs[j], ys[i])
    slice: dict

    def records(self) -> list:
        return [
            {self.x: float(xv), self.y: float(yv), "prediction": float(self.z[i, j])}
            for i, yv in enumerate(self.ys)
            for j, xv in enumerate(self.xs)
        ]


def surface_grid(
    model: ResponseModel,
    x: str,
    y: str,
    slice: Optional[Mapping[str, float]] = None,
    resolution: int = 21,
) -> SurfaceGrid:
    """Model predictions over the coded square [-1, 1]^2 in ``x`` and ``y``."""
    slice = dict(slice or {})
    for v in (x, y):
        if v in slice:
            raise ValueError(f"slice may not fix the plotted factor {v!r}")
    used = {f for t in model.names for f in t.split(":")}
    for v in (x, y):
        if v not in used:
            raise ValueError(f"factor {v!r} does not appear in the model")
    if x == y:
        raise ValueError("x and y must differ")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    xs = np.linspace(-1.0, 1.0, resolution)
    ys = np.linspace(-1.0, 1.0, resolution)
    z = np.empty((resolution, resolution))
    for i, yv in enumerate(ys):
        for j, xv in enumerate(xs):
            z[i, j] = model.predict({**slice, x: xv, y: yv})
    return SurfaceGrid(x, y, xs, ys, z, slice)
