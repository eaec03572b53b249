"""Error metrics, (m, lambda) sweeps, full-solver studies, and timing benchmarks."""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np
from threadpoolctl import threadpool_limits

from flrn.errors import InvalidArgument, NumericError
from flrn.estimator import (
    FittedModel,
    RidgeConfig,
    _solve_full,
    _solve_nystrom,
    fit_full,
    fit_nystrom,
    predict_many,
    reconstruct_slope,
    subsample_uniform,
)
from flrn.funcspace import FLOAT_FMT, Curve, Dataset, _check_same_grid, l2_inner
from flrn.gram import cross_entries, gram_cross, gram_full
from flrn.kernels import CovarianceSpec, KernelSpec, grid_covariance, grid_kernel
from flrn.synth import SynthConfig, beta_star, make_experiment, noiseless_responses

log = logging.getLogger(__name__)

SWEEP_HEADER = ["m", "lambda", "mean_rmse", "std_rmse", "reps"]
BENCH_HEADER = ["method", "n", "m", "wall_time_seconds", "fit_residual", "threads"]


# ---------------------------------------------------------------- metrics


def _rmse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def targets(test: Dataset, beta_true: Curve | None) -> np.ndarray:
    """Noiseless <beta, X_i> when ``beta_true`` is given, else the stored responses."""
    if beta_true is None:
        return np.asarray(test.y)
    _check_same_grid(test.grid, beta_true.grid)
    return noiseless_responses(test.X, beta_true)


def rmse(model: FittedModel, test: Dataset, beta_true: Curve | None = None) -> float:
    if len(test) == 0:
        raise InvalidArgument("empty test set")
    return _rmse(predict_many(model, test), targets(test, beta_true))


def l2_slope_error(model: FittedModel, beta_true: Curve) -> float:
    d = reconstruct_slope(model, beta_true.grid) - beta_true
    return math.sqrt(max(l2_inner(d, d), 0.0))


def seminorm(d: Curve, cov: CovarianceSpec) -> float:
    """sqrt of the double integral of d(s) C(s, t) d(t), clipped at zero."""
    wd = d.grid.weights * d.values
    q = float(wd @ grid_covariance(cov, d.grid) @ wd)
    return math.sqrt(max(q, 0.0))


def prediction_seminorm_error(
    model: FittedModel, beta_true: Curve, cov: CovarianceSpec = CovarianceSpec()
) -> float:
    return seminorm(reconstruct_slope(model, beta_true.grid) - beta_true, cov)


# ------------------------------------------------------------------ sweep


@dataclass(frozen=True)
class SweepSpec:
    lambda_min: float = 1e-7
    lambda_max: float = 1e-4
    lambda_points: int = 25
    m_min: int = 10
    m_max: int = 240
    m_points: int = 25
    reps: int = 100
    base_seed: int = 0

    def __post_init__(self):
        if not 0 < self.lambda_min <= self.lambda_max:
            raise InvalidArgument("need 0 < lambda_min <= lambda_max")
        if not 1 <= self.m_min <= self.m_max:
            raise InvalidArgument("need 1 <= m_min <= m_max")
        if self.lambda_points < 1 or self.m_points < 1 or self.reps < 1:
            raise InvalidArgument("grid sizes and reps must be >= 1")

    def lambdas(self) -> np.ndarray:
        return np.geomspace(self.lambda_min, self.lambda_max, self.lambda_points)

    def ms(self) -> np.ndarray:
        return np.unique(np.rint(np.linspace(self.m_min, self.m_max, self.m_points)).astype(int))


@dataclass(frozen=True)
class SweepRow:
    m: int
    lam: float
    mean_rmse: float
    std_rmse: float
    reps: int


@dataclass
class SweepResult:
    rows: list[SweepRow]
    failures: int = 0

    def best(self, where=lambda row: True) -> SweepRow:
        rows = [r for r in self.rows if where(r) and np.isfinite(r.mean_rmse)]
        return min(rows, key=lambda r: r.mean_rmse)

    def table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ms, lambdas, mean matrix indexed [lambda, m])."""
        ms = np.unique([r.m for r in self.rows])
        lams = np.unique([r.lam for r in self.rows])
        M = np.full((lams.size, ms.size), np.nan)
        for r in self.rows:
            M[np.searchsorted(lams, r.lam), np.searchsorted(ms, r.m)] = r.mean_rmse
        return ms, lams, M


def cell_seed(base_seed: int, m_index: int, lam_index: int, rep: int) -> int:
    """64-bit subsample seed for one (cell, repetition); independent of run order."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(m_index, lam_index, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def _mean_std(values: list[float]) -> tuple[float, float, int]:
    ok = np.array([v for v in values if np.isfinite(v)])
    if ok.size == 0:
        return float("nan"), float("nan"), 0
    return float(ok.mean()), float(ok.std(ddof=1)) if ok.size > 1 else 0.0, int(ok.size)


def run_sweep(
    train: Dataset,
    test: Dataset,
    kernel: KernelSpec,
    spec: SweepSpec,
    beta_true: Curve | None = None,
    noisy_targets: bool = False,
    jitter: str = "auto",
    threads: int = 1,
) -> SweepResult:
    """Mean test RMSE of Nystrom fits over a log-lambda by linear-m grid.

    Targets are noiseless <beta, X> (beta defaults to the synthetic slope)
    unless ``noisy_targets``. A failed fit counts as a missing repetition; a
    cell with no successful repetition reports NaN.
    """
    n = len(train)
    if spec.m_max > n:
        raise InvalidArgument(f"m_max={spec.m_max} exceeds the {n} training curves")
    _check_same_grid(train.grid, test.grid)
    if noisy_targets:
        y_test = targets(test, None)
    else:
        y_test = targets(test, beta_true if beta_true is not None else beta_star(test.grid))
    # column slices of these equal the direct per-fit assembly exactly
    K = gram_full(train, kernel).entries
    Kt = gram_cross(test, train, kernel).entries
    ms, lams = spec.ms(), spec.lambdas()
    cfgs = [RidgeConfig(float(lam), jitter=jitter) for lam in lams]

    def column(i_m: int) -> tuple[list[SweepRow], int]:
        m = int(ms[i_m])
        rows, failed = [], 0
        for i_l, cfg in enumerate(cfgs):
            errs = []
            for r in range(spec.reps):
                idx = subsample_uniform(n, m, cell_seed(spec.base_seed, i_m, i_l, r))
                try:
                    a, _ = _solve_nystrom(K[:, idx], idx, train.y, cfg)
                except NumericError:
                    failed += 1
                    errs.append(float("nan"))
                    continue
                errs.append(_rmse(np.ascontiguousarray(Kt[:, idx]) @ a, y_test))
            mean, std, ok = _mean_std(errs)
            rows.append(SweepRow(m, cfg.lam, mean, std, ok))
        return rows, failed

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(column, range(ms.size)))
    else:
        parts = [column(i) for i in range(ms.size)]
    rows = [row for part, _ in parts for row in part]
    failures = sum(f for _, f in parts)
    if failures:
        log.warning("%d of %d sweep fits failed", failures, len(rows) * spec.reps)
    return SweepResult(rows, failures)


# ------------------------------------------------------ full-solver study


@dataclass(frozen=True)
class StudyRow:
    n_train: int
    lam: float
    mean_rmse: float
    std_rmse: float
    reps: int


def study_seed(base_seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(base_seed, spawn_key=(rep,))
    return int(ss.generate_state(1, np.uint64)[0])


def run_full_study(
    cfg: SynthConfig,
    kernel: KernelSpec,
    lambdas: Sequence[float],
    reps: int,
    base_seed: int = 0,
) -> list[StudyRow]:
    """Full-solver RMSE per lambda, averaged over freshly generated datasets.

    Repetition r regenerates train and test from seed ``study_seed(base_seed, r)``.
    """
    errs = np.full((reps, len(lambdas)), np.nan)
    cfgs = [RidgeConfig(float(lam)) for lam in lambdas]
    for r in range(reps):
        train, test = make_experiment(replace(cfg, seed=study_seed(base_seed, r)))
        K = gram_full(train, kernel).entries
        Kt = gram_cross(test, train, kernel).entries
        y_test = targets(test, beta_star(test.grid))
        for j, rc in enumerate(cfgs):
            try:
                a, _ = _solve_full(K, train.y, rc)
            except NumericError:
                continue
            errs[r, j] = _rmse(Kt @ a, y_test)
    rows = []
    for j, rc in enumerate(cfgs):
        mean, std, ok = _mean_std(list(errs[:, j]))
        rows.append(StudyRow(cfg.n_train, rc.lam, mean, std, ok))
    return rows


# ---------------------------------------------------------------- bench


@dataclass(frozen=True)
class BenchRow:
    method: str
    n: int
    m: int
    wall_time_seconds: float
    fit_residual: float
    threads: int


@dataclass
class BenchResult:
    rows: list[BenchRow] = field(default_factory=list)

    def times(self, method: str) -> dict[int, float]:
        return {r.n: r.wall_time_seconds for r in self.rows if r.method == method}

    def doubling_ratios(self, method: str) -> list[tuple[int, float]]:
        """(n, t(2n)/t(n)) for every consecutive doubling present."""
        t = self.times(method)
        return [(n, t[2 * n] / t[n]) for n in sorted(t) if 2 * n in t]


def _full_residual(model: FittedModel, data: Dataset) -> float:
    K = gram_full(data, model.kernel).entries
    n = len(data)
    r = K @ model.coeff + n * model.lam * model.coeff - data.y
    return float(np.linalg.norm(r) / np.linalg.norm(data.y))


def _nystrom_residual(model: FittedModel, data: Dataset) -> float:
    idx = model.subsample_indices
    Knm = cross_entries(data.X, data.X[idx], data.grid, model.kernel)
    n = len(data)
    M = Knm.T @ Knm + n * model.lam * Knm[idx]
    M = (M + M.T) / 2
    rhs = Knm.T @ data.y
    return float(np.linalg.norm(M @ model.coeff - rhs) / np.linalg.norm(rhs))


def run_bench(
    train_sizes: Sequence[int],
    m: int,
    reps: int,
    kernel: KernelSpec = KernelSpec(),
    lam: float = 1e-6,
    grid_size: int = 256,
    seed: int = 0,
    threads: int = 1,
    methods: Sequence[str] = ("full", "nystrom"),
    full_max_n: int | None = None,
) -> BenchResult:
    """Median fit wall time per (method, n).

    Timed regions cover Gram assembly and the solve. Data generation and the
    shared G x G kernel table are prepared beforehand. BLAS runs with
    ``threads`` threads. ``full_max_n`` skips the full solver above that size.
    """
    sizes = [int(n) for n in train_sizes]
    if not sizes or min(sizes) < 1:
        raise InvalidArgument("train sizes must be positive")
    if not 1 <= m <= min(sizes):
        raise InvalidArgument("m must not exceed the smallest training size")
    if reps < 1:
        raise InvalidArgument("reps must be >= 1")
    cfg = RidgeConfig(lam)
    result = BenchResult()
    with threadpool_limits(limits=threads):
        for n in sizes:
            train, _ = make_experiment(
                SynthConfig(n_total=n + 1, n_train=n, grid_size=grid_size, seed=seed)
            )
            grid_kernel(kernel, train.grid)
            for method in methods:
                if method == "full" and full_max_n is not None and n > full_max_n:
                    continue
                times = []
                for r in range(reps):
                    t0 = time.perf_counter()
                    if method == "full":
                        model = fit_full(train, kernel, cfg)
                    else:
                        model = fit_nystrom(train, kernel, cfg, m, seed + r)
                    times.append(time.perf_counter() - t0)
                if method == "full":
                    res = _full_residual(model, train)
                else:
                    res = _nystrom_residual(model, train)
                result.rows.append(
                    BenchRow(method, n, n if method == "full" else m,
                             float(np.median(times)), res, threads)
                )
                log.info("%s n=%d median %.4fs", method, n, result.rows[-1].wall_time_seconds)
    return result


# ------------------------------------------------------------------ output


def _fmt(x: float) -> str:
    return "" if not np.isfinite(x) else FLOAT_FMT.format(x)


def _parse(s: str) -> float:
    return float("nan") if s == "" else float(s)


def write_sweep_csv(result: SweepResult, path) -> None:
    if not result.rows:
        raise InvalidArgument("empty sweep result")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in result.rows:
            w.writerow([r.m, _fmt(r.lam), _fmt(r.mean_rmse), _fmt(r.std_rmse), r.reps])


def read_sweep_csv(path) -> SweepResult:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        if next(reader) != SWEEP_HEADER:
            raise InvalidArgument(f"{path}: not a sweep file")
        rows = [
            SweepRow(int(m), _parse(lam), _parse(mu), _parse(sd), int(k))
            for m, lam, mu, sd, k in reader
        ]
    return SweepResult(rows)


def write_bench_csv(result: BenchResult, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_HEADER)
        for r in result.rows:
            w.writerow([r.method, r.n, r.m, _fmt(r.wall_time_seconds), _fmt(r.fit_residual), r.threads])


def write_study_csv(rows: Sequence[StudyRow], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_train", "lambda", "mean_rmse", "std_rmse", "reps"])
        for r in rows:
            w.writerow([r.n_train, _fmt(r.lam), _fmt(r.mean_rmse), _fmt(r.std_rmse), r.reps])


# viridis anchors: luminance increases monotonically from dark purple to yellow
_CMAP = np.array([
    [68, 1, 84], [72, 40, 120], [62, 74, 137], [49, 104, 142], [38, 130, 142],
    [31, 158, 137], [53, 183, 121], [109, 205, 89], [180, 222, 44], [253, 231, 37],
], dtype=float)
NAN_COLOR = "#bfbfbf"


def colormap(u: float) -> str:
    """Map u in [0, 1] to a hex colour by piecewise-linear viridis interpolation."""
    u = min(max(u, 0.0), 1.0) * (len(_CMAP) - 1)
    i = min(int(u), len(_CMAP) - 2)
    rgb = _CMAP[i] + (u - i) * (_CMAP[i + 1] - _CMAP[i])
    return "#{:02x}{:02x}{:02x}".format(*np.rint(rgb).astype(int))


def write_heatmap_svg(result: SweepResult, path, title: str = "mean RMSE") -> None:
    """Raster of mean RMSE with m on the x axis and lambda (log) on the y axis."""
    if not result.rows:
        raise InvalidArgument("empty sweep result")
    ms, lams, M = result.table()
    finite = M[np.isfinite(M)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    cw, ch = 24, 18
    left, top = 90, 40
    width, height = cw * ms.size, ch * lams.size
    legend_x = left + width + 30
    total_w, total_h = legend_x + 110, top + height + 60

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'font-family="sans-serif" font-size="10">',
        f'<text x="{left + width / 2}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        '<defs><linearGradient id="cbar" x1="0" y1="1" x2="0" y2="0">',
    ]
    for k in range(11):
        out.append(f'<stop offset="{k / 10:.1f}" stop-color="{colormap(k / 10)}"/>')
    out.append("</linearGradient></defs>")
    for i, lam in enumerate(lams):
        y = top + (lams.size - 1 - i) * ch  # largest lambda on top
        for j, m in enumerate(ms):
            v = M[i, j]
            color = colormap((v - lo) / span) if np.isfinite(v) else NAN_COLOR
            label = f"m={m}, lambda={lam:.3g}, rmse={v:.4g}"
            out.append(
                f'<rect class="cell" x="{left + j * cw}" y="{y}" width="{cw}" height="{ch}" '
                f'fill="{color}"><title>{escape(label)}</title></rect>'
            )
        out.append(
            f'<text x="{left - 4}" y="{y + ch * 0.7}" text-anchor="end">{lam:.2e}</text>'
        )
    step = max(1, ms.size // 8)
    for j in range(0, ms.size, step):
        out.append(
            f'<text x="{left + j * cw + cw / 2}" y="{top + height + 14}" '
            f'text-anchor="middle">{ms[j]}</text>'
        )
    out += [
        f'<text x="{left + width / 2}" y="{top + height + 34}" text-anchor="middle">'
        "subsample size m</text>",
        f'<text x="20" y="{top + height / 2}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + height / 2})">regularization lambda</text>',
        f'<rect class="legend" x="{legend_x}" y="{top}" width="16" height="{height}" fill="url(#cbar)"/>',
        f'<text x="{legend_x + 22}" y="{top + 8}">{hi:.4g}</text>',
        f'<text x="{legend_x + 22}" y="{top + height}">{lo:.4g}</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(out) + "\n")
