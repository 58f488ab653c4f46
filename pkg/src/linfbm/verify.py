"""Monte Carlo ensembles and the z-tests behind every law-level claim."""

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import RefusalError, UsageError
from .fbm import covariance, ensemble_batches, hurst
from .grid import SamplePath, TimeGrid
from .rng import derive_seed, derive_seeds
from .young import integrate_values

__all__ = [
    "config_hash",
    "Ensemble",
    "TestReport",
    "estimate_covariance",
    "check_fbm_law",
    "gaussian_abs_moment",
    "check_moment_bound",
    "growth_law_report",
    "check_growth_law",
    "run_suite",
    "DEFAULT_SUITE",
]

THRESHOLD = 4.0
MIN_PATHS = 100


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(eq=False)
class Ensemble:
    """Paths stored row-wise in ``values`` (n_paths, n_points) over one grid.

    Row ``i`` of a generated ensemble is the path with seed
    ``derive_seed(base_seed, i)``.
    """

    grid: TimeGrid
    values: np.ndarray
    base_seed: int = None
    generator_config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape[1] != len(self.grid):
            raise UsageError("ensemble paths and grid differ in length")

    @classmethod
    def generate(cls, grid, h, n_paths, base_seed, method="cholesky", batch=4000):
        vals = np.empty((n_paths, len(grid)))
        for lo, block in ensemble_batches(grid, h, base_seed, n_paths, method, batch):
            vals[lo:lo + block.shape[0]] = block
        return cls(grid, vals, base_seed, {"h": hurst(h), "method": method, "n_paths": n_paths})

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def paths(self):
        seeds = (derive_seeds(self.base_seed, self.n_paths) if self.base_seed is not None
                 else [0] * self.n_paths)
        return [SamplePath(self.grid, row, s, "") for row, s in zip(self.values, seeds)]

    def path(self, i):
        seed = derive_seed(self.base_seed, i) if self.base_seed is not None else 0
        return SamplePath(self.grid, self.values[i], seed, "")

    def column(self, t):
        return self.values[:, self.grid.index_of(t)]

    @property
    def config_hash(self):
        return config_hash({"base_seed": self.base_seed, **self.generator_config})


@dataclass
class TestReport:
    """Outcome of one statistical check.

    For z-tests ``passed == (abs(z_score) <= threshold)``. One-sided bounds
    report ``z_score = max(0, excess / stderr)``; rule-based checks leave
    ``z_score`` as ``None`` and carry their rule in ``details``.
    """

    __test__ = False  # not a pytest class

    statistic_name: str
    estimate: float
    stderr: float
    target: float
    z_score: float
    passed: bool
    n_paths: int
    config_hash: str
    threshold: float = THRESHOLD
    details: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k in ("estimate", "stderr", "target", "z_score"):
            if d[k] is not None:
                d[k] = float(d[k])
        d["passed"] = bool(d["passed"])
        return d


def _z(est, target, se):
    if se > 0:
        return (est - target) / se
    return 0.0 if est == target else math.inf


def _covariance_from_columns(xs, xt):
    n = xs.size
    if n < MIN_PATHS:
        raise UsageError(f"covariance estimate needs at least {MIN_PATHS} paths, got {n}")
    c_st = float(np.mean(xs * xt))
    c_ss = float(np.mean(xs * xs))
    c_tt = float(np.mean(xt * xt))
    se = math.sqrt(max(c_ss * c_tt + c_st * c_st, 0.0) / n)
    return c_st, se


def estimate_covariance(e, s, t, bootstrap=0, seed=0):
    """Sample E[X_s X_t] of a centered ensemble and its Gaussian standard error.

    ``bootstrap > 0`` adds ``bootstrap_stderr`` from that many resamples of
    the paths (a slow cross-check of the Gaussian formula).
    """
    xs, xt = e.column(s), e.column(t)
    est, se = _covariance_from_columns(xs, xt)
    out = {"estimate": est, "stderr": se}
    if bootstrap:
        gen = np.random.Generator(np.random.Philox(seed))
        prod = xs * xt
        means = [float(np.mean(prod[gen.integers(0, prod.size, prod.size)])) for _ in range(bootstrap)]
        out["bootstrap_stderr"] = float(np.std(means, ddof=1))
    return out


def _marginal_reports(x, t, e, threshold):
    n = x.size
    xc = x - x.mean()
    m2 = float(np.mean(xc**2))
    out = []
    if m2 == 0.0:
        return out
    skew = float(np.mean(xc**3)) / m2**1.5
    kurt = float(np.mean(xc**4)) / m2**2 - 3.0
    for name, est, se in (("skewness", skew, math.sqrt(6.0 / n)),
                          ("excess_kurtosis", kurt, math.sqrt(24.0 / n))):
        z = _z(est, 0.0, se)
        out.append(TestReport(f"{name}@{t:g}", est, se, 0.0, z, abs(z) <= threshold, n,
                              e.config_hash, threshold))
    return out


def check_fbm_law(e, h, pairs, threshold=THRESHOLD):
    """Covariance z-tests against R_H at each pair, plus skewness/kurtosis at the pair times."""
    h = hurst(h)
    reports = []
    for s, t in pairs:
        c = estimate_covariance(e, s, t)
        target = covariance(s, t, h)
        z = _z(c["estimate"], target, c["stderr"])
        reports.append(TestReport(f"cov({s:g},{t:g})", c["estimate"], c["stderr"], target, z,
                                  abs(z) <= threshold, e.n_paths, e.config_hash, threshold,
                                  {"h": h}))
    times = sorted({float(x) for pair in pairs for x in pair})
    for t in times:
        reports.extend(_marginal_reports(e.column(t), t, e, threshold))
    return reports


def gaussian_abs_moment(q):
    """E|N(0,1)|^q."""
    return 2.0 ** (q / 2.0) * math.gamma((q + 1.0) / 2.0) / math.sqrt(math.pi)


def check_moment_bound(e, q, h, probe_times, sup_m, threshold=THRESHOLD):
    """One-sided test of E|I(t)|^q <= c_q sup|M|^q t^(qH) at each probe.

    ``sup_m`` is sup |M| on (0, 1]; ``math.inf`` (unbounded M) is refused.
    """
    h = hurst(h)
    if not (q >= 1):
        raise UsageError("moment order q must be >= 1")
    if sup_m is None or not math.isfinite(sup_m):
        raise RefusalError("moment bound is only checked for bounded M; the constant would "
                           "depend on sup M, which is infinite here")
    bound = gaussian_abs_moment(q) * sup_m**q
    per_probe = []
    worst_z = 0.0
    k_hat = 0.0
    for t in probe_times:
        a = np.abs(e.column(t)) ** q
        mean = float(a.mean())
        scale = t ** (q * h)
        r = mean / scale
        rel = float(a.std(ddof=1)) / math.sqrt(a.size) / mean if mean > 0 else 0.0
        se = bound * rel
        z = max(0.0, _z(r, bound, se)) if se > 0 else (0.0 if r <= bound else math.inf)
        worst_z = max(worst_z, z)
        k_hat = max(k_hat, r)
        per_probe.append({"t": t, "ratio": r, "rel_stderr": rel, "z": z})
    worst = max(per_probe, key=lambda d: d["z"]) if per_probe else {"rel_stderr": 0.0}
    return TestReport(f"moment_bound(q={q:g})", k_hat, bound * worst["rel_stderr"], bound, worst_z,
                      worst_z <= threshold, e.n_paths, e.config_hash, threshold,
                      {"one_sided": True, "probes": per_probe, "c_q": gaussian_abs_moment(q),
                       "sup_m": sup_m})


def growth_law_report(values, horizons, h, ratio_limit=0.1, cfg_hash=""):
    """Median-decay surrogate: G(T) = |I(T)| / T^2H medians strictly decreasing, last/first < limit."""
    h = hurst(h)
    values = np.atleast_2d(values)
    horizons = np.asarray(horizons, dtype=float)
    g = np.abs(values) / horizons ** (2.0 * h)
    med = np.median(g, axis=0)
    decreasing = bool(np.all(np.diff(med) < 0))
    ratio = float(med[-1] / med[0]) if med[0] > 0 else math.inf
    passed = decreasing and ratio < ratio_limit
    return TestReport("growth_law_median", ratio, 0.0, ratio_limit, None, passed, values.shape[0],
                      cfg_hash, ratio_limit,
                      {"rule": "strictly decreasing medians and last/first < limit",
                       "horizons": horizons.tolist(), "medians": med.tolist(),
                       "decreasing": decreasing})


def check_growth_law(h, horizons, n_paths, base_seed, integrand=None, steps_per_unit=64,
                     batch=32):
    """Simulate I(T) = int_0^T M dB^H on one uniform circulant grid up to max(horizons).

    ``integrand`` is a bounded callable M (default M = 1). Each batch keeps
    only the values at the horizons.
    """
    h = hurst(h)
    t_max = float(max(horizons))
    n = int(round(t_max * steps_per_unit))
    grid = TimeGrid.uniform(0.0, t_max, n)
    idx = [grid.index_of(T) for T in horizons]
    fvals = None if integrand is None else np.array([integrand(t) for t in grid.points])
    out = np.empty((n_paths, len(horizons)))
    for lo, block in ensemble_batches(grid, h, base_seed, n_paths, "circulant", batch):
        vals = block if fvals is None else integrate_values(fvals, block)
        out[lo:lo + block.shape[0]] = vals[:, idx]
    cfg = {"test": "growth_law", "h": h, "horizons": list(horizons), "n_paths": n_paths,
           "base_seed": base_seed, "steps_per_unit": steps_per_unit}
    return growth_law_report(out, horizons, h, cfg_hash=config_hash(cfg))


# -- suite ----------------------------------------------------------------------------------

def _run_fbm_law(cfg, seed):
    h = cfg["h"]
    grid = TimeGrid.uniform(0.0, 1.0, cfg.get("n", 64))
    e = Ensemble.generate(grid, h, cfg.get("n_paths", 20000), seed, cfg.get("method", "circulant"))
    pairs = [tuple(p) for p in cfg.get("pairs", [(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)])]
    test_h = cfg.get("test_h", h)
    return check_fbm_law(e, test_h, pairs, cfg.get("threshold", THRESHOLD))


def _run_moment_bound(cfg, seed):
    h = cfg["h"]
    grid = TimeGrid.uniform(0.0, 1.0, cfg.get("n", 64))
    e = Ensemble.generate(grid, h, cfg.get("n_paths", 20000), seed, "circulant")
    power = cfg.get("integrand_power", 0.0)  # M(r) = r^power, bounded for power >= 0
    mvals = grid.points**power
    ie = Ensemble(grid, integrate_values(mvals, e.values), seed, {**e.generator_config, **cfg})
    probes = [2.0**-k for k in range(cfg.get("k_max", 6) + 1)]
    return [check_moment_bound(ie, q, h, probes, 1.0, cfg.get("threshold", THRESHOLD))
            for q in cfg.get("q", [2, 4])]


def _run_growth_law(cfg, seed):
    horizons = [10.0**j for j in range(cfg.get("decades", 3) + 1)]
    return [check_growth_law(cfg["h"], horizons, cfg.get("n_paths", 2000), seed,
                             steps_per_unit=cfg.get("steps_per_unit", 64))]


def beta_ensemble(h, n_paths, base_seed, per_octave=32, octaves=None, t_points=(0.25, 0.5, 1.0),
                  max_tail_stderr=1e-3, batch=2000):
    """beta(t) at ``t_points`` for drivers on a geometric grid [1, 2^octaves]."""
    from .inversion import beta_values

    h = hurst(h)
    if octaves is None:
        octaves = int(math.ceil(math.log2(max_tail_stderr ** (-1.0 / h))))
    u_grid = TimeGrid.geometric(1.0, 2.0**octaves, per_octave * octaves)
    tail = u_grid.stop**-h
    if tail >= max_tail_stderr:
        raise UsageError("horizon too short for the requested tail accuracy")
    t_points = np.asarray(t_points, dtype=float)
    out = np.empty((n_paths, t_points.size))
    for lo, block in ensemble_batches(u_grid, h, base_seed, n_paths, "cholesky", batch):
        out[lo:lo + block.shape[0]] = beta_values(u_grid.points, block, h, t_points)
    grid = TimeGrid.custom(t_points)
    cfg = {"statistic": "beta", "h": h, "per_octave": per_octave, "octaves": octaves}
    return Ensemble(grid, out, base_seed, cfg), tail


def _run_beta_law(cfg, seed):
    e, tail = beta_ensemble(cfg["h"], cfg.get("n_paths", 20000), seed,
                            cfg.get("per_octave", 32), max_tail_stderr=cfg.get("max_tail_stderr", 1e-3))
    pairs = [tuple(p) for p in cfg.get("pairs", [(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)])]
    reps = check_fbm_law(e, cfg["h"], pairs, cfg.get("threshold", THRESHOLD))
    for r in reps:
        r.details["tail_stderr"] = tail
    return reps


def inversion_drift_ensemble(h, n_paths, base_seed, per_octave=32, octaves=14, batch=4000):
    """Drivers on [1, 2^octaves]; their hat paths live on [2^-octaves, 1]."""
    h = hurst(h)
    u_grid = TimeGrid.geometric(1.0, 2.0**octaves, per_octave * octaves)
    b = np.empty((n_paths, len(u_grid)))
    for lo, block in ensemble_batches(u_grid, h, base_seed, n_paths, "cholesky", batch):
        b[lo:lo + block.shape[0]] = block
    return u_grid, b


def _run_inversion_drift(cfg, seed):
    from .inversion import fbm_inversion_drift_check

    u_grid, b = inversion_drift_ensemble(cfg["h"], cfg.get("n_paths", 20000), seed,
                                         cfg.get("per_octave", 32), cfg.get("octaves", 14))
    pairs = [tuple(p) for p in cfg.get("pairs", [(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)])]
    res = fbm_inversion_drift_check(u_grid, b, cfg["h"], pairs, cfg.get("threshold", THRESHOLD),
                                    richardson=cfg.get("richardson", True), base_seed=seed)
    for r in res["reports"]:
        r.details["truncation_bound"] = res["truncation_bound"]
    return res["reports"]


RUNNERS = {
    "fbm_law": _run_fbm_law,
    "moment_bound": _run_moment_bound,
    "growth_law": _run_growth_law,
    "beta_law": _run_beta_law,
    "inversion_drift": _run_inversion_drift,
}

DEFAULT_SUITE = {
    "base_seed": 20240611,
    "tests": [
        {"name": "fbm_law", "h": 0.6},
        {"name": "fbm_law", "h": 0.75},
        {"name": "fbm_law", "h": 0.9},
        {"name": "moment_bound", "h": 0.75, "integrand_power": 0.0},
        {"name": "moment_bound", "h": 0.75, "integrand_power": 1.0},
        {"name": "growth_law", "h": 0.75},
        {"name": "beta_law", "h": 0.75},
        {"name": "inversion_drift", "h": 0.75},
    ],
}


def run_suite(config, log=None):
    """Run every test in ``config["tests"]`` with seeds derived from ``base_seed``.

    Returns a JSON-serializable report; ``report["passed"]`` is the
    aggregate verdict. Only ``timestamp`` and ``elapsed_s`` vary between
    identical runs.
    """
    if not isinstance(config, dict) or not isinstance(config.get("tests", []), list):
        raise UsageError("suite config must be an object with a 'tests' list")
    base = int(config.get("base_seed", 0))
    started = time.time()
    results = []
    for i, test in enumerate(config.get("tests", [])):
        name = test.get("name")
        if name not in RUNNERS:
            raise UsageError(f"unknown suite test {name!r}; known: {sorted(RUNNERS)}")
        if "h" in test:
            hurst(test["h"])
        t0 = time.time()
        reports = RUNNERS[name](test, derive_seed(base, i))
        entry = {"name": name, "config": test, "passed": all(r.passed for r in reports),
                 "reports": [r.to_dict() for r in reports]}
        results.append(entry)
        if log is not None:
            log(f"{name} {json.dumps(test, sort_keys=True)}: "
                f"{'PASS' if entry['passed'] else 'FAIL'} ({time.time() - t0:.1f}s)")
    return {
        "config": config,
        "config_hash": config_hash(config),
        "results": results,
        "passed": all(r["passed"] for r in results),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "elapsed_s": round(time.time() - started, 3),
    }
