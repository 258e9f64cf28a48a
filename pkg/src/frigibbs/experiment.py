"""Seeded Monte-Carlo sweeps over noise level and sample count.

An :class:`ExperimentSpec` names a grid of ``(sigma_e, N)`` cells, a rule
for the ground-truth signal, the reconstruction methods and a number of
seeds.  Every random stream is keyed by the values that identify it
rather than by its position in the sweep::

    truth  <- (master_seed, seed index, support)
    noise  <- (master_seed, N, seed index)
    chain  <- (master_seed, N, sigma_e, seed index)

so dropping or reordering cells never changes the results of the others,
and the same unit-variance noise vector is scaled by every ``sigma_e`` of
a given ``(N, seed)``.  That last point makes the per-seed SNR strictly
decreasing in ``sigma_e``.

Spec files are INI text read with :mod:`configparser`; see
``frigibbs/configs/expt_a.cfg`` for the layout.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .annihilator import annihilate_reconstruct
from .errors import FriError, InvalidConfigError
from .gibbs import ALIGNMENTS, GibbsConfig, GibbsState, run_gibbs
from .llse import llse_refine
from .model import (
    INFINITE_SNR,
    AcquisitionConfig,
    FriSignal,
    NoiseSpec,
    add_noise,
    random_signal,
    reconstruction_error,
    snr_db,
    synthesize_samples,
)

log = logging.getLogger(__name__)

SPEC_SCHEMA_VERSION = 1
METHODS = ("gibbs", "gibbs_llse", "annihilator")
JOBS_ENV_VAR = "FRIGIBBS_JOBS"

# stream roles for seed derivation
_TRUTH, _NOISE, _CHAIN = 1, 2, 3

#: Error assigned to a failed reconstruction: the empty estimate, ``z_est = 0``.
FAILED_ERROR = 1.0


def parse_range(text: str) -> tuple[float, ...]:
    """Parse ``"start:step:stop"`` (inclusive, Matlab style) or a comma list.

    >>> parse_range("1.5:0.25:2.0")
    (1.5, 1.75, 2.0)
    >>> parse_range("0, 1e-6")
    (0.0, 1e-06)
    """
    text = text.strip()
    if not text:
        raise InvalidConfigError("empty range")
    if ":" in text:
        parts = [p.strip() for p in text.split(":")]
        if len(parts) == 2:
            parts.insert(1, "1")
        if len(parts) != 3:
            raise InvalidConfigError(f"range {text!r} is not start:step:stop")
        try:
            start, step, stop = (float(p) for p in parts)
        except ValueError as exc:
            raise InvalidConfigError(f"bad number in range {text!r}") from exc
        if step == 0 or (stop - start) / step < 0:
            raise InvalidConfigError(f"range {text!r} is empty")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        # round away the binary residue of start + i*step
        return tuple(round(start + i * step, 12) for i in range(count))
    try:
        return tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise InvalidConfigError(f"bad number list {text!r}") from exc


def _float_bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def derive_seed(master_seed: int, *key: int) -> int:
    """64-bit seed for the stream identified by ``key`` under ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TruthRule:
    """How the ground truth of each seed is produced.

    ``mode="fixed"`` uses ``weights``/``locations`` for every seed.
    ``mode="random"`` draws ``K`` locations uniformly over the observation
    window at least ``min_separation`` seconds apart and weights uniform on
    ``amplitude`` (with a random sign if ``random_sign``).
    """

    mode: str = "random"
    weights: tuple[float, ...] = ()
    locations: tuple[float, ...] = ()
    amplitude: tuple[float, float] = (2.0, 6.0)
    min_separation: float = 2.0
    random_sign: bool = False

    def __post_init__(self):
        if self.mode not in ("fixed", "random"):
            raise InvalidConfigError(f"truth mode must be fixed or random, got {self.mode!r}")
        if self.mode == "fixed" and (not self.weights or len(self.weights) != len(self.locations)):
            raise InvalidConfigError("fixed truth needs equal-length weights and locations")
        if self.min_separation < 0:
            raise InvalidConfigError("min_separation must be >= 0")
        if not self.amplitude[0] <= self.amplitude[1]:
            raise InvalidConfigError(f"empty amplitude range {self.amplitude}")

    def draw(self, rng: np.random.Generator, K: int, support: tuple[float, float]) -> FriSignal:
        if self.mode == "fixed":
            return FriSignal(self.weights, self.locations).canonical()
        return random_signal(rng, K, support, self.min_separation, self.amplitude, self.random_sign)


_GIBBS_KEYS = {
    "burn_in": int,
    "keep": int,
    "location_grid_points": int,
    "max_attempts": int,
    "envelope_safety": float,
    "proposal_uniform_weight": float,
    "alignment": str,
    "init_sigma_e": float,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.  Exactly one of ``T`` and ``window`` is set; with
    ``window`` the sample period is ``window / (N - 1)`` so every ``N``
    observes the same interval.
    """

    name: str
    K: int
    sigma_e_sweep: tuple[float, ...]
    N_sweep: tuple[int, ...]
    sigma_h: float
    T: float | None = None
    window: float | None = None
    n_seeds: int = 25
    master_seed: int = 0
    methods: tuple[str, ...] = ("gibbs", "gibbs_llse")
    truth: TruthRule = field(default_factory=TruthRule)
    gibbs: tuple[tuple[str, object], ...] = ()

    def __post_init__(self):
        if self.K < 1:
            raise InvalidConfigError(f"K must be >= 1, got {self.K}")
        if not self.sigma_e_sweep or not self.N_sweep:
            raise InvalidConfigError("sigma_e and N sweeps must be non-empty")
        if any(s < 0 for s in self.sigma_e_sweep):
            raise InvalidConfigError("sigma_e values must be >= 0")
        if any(int(n) != n or n < 2 for n in self.N_sweep):
            raise InvalidConfigError("N values must be integers >= 2")
        if not self.sigma_h > 0:
            raise InvalidConfigError(f"sigma_h must be positive, got {self.sigma_h}")
        if self.n_seeds < 1:
            raise InvalidConfigError("n_seeds must be >= 1")
        if (self.T is None) == (self.window is None):
            raise InvalidConfigError("set exactly one of T and window")
        for v, what in ((self.T, "T"), (self.window, "window")):
            if v is not None and not v > 0:
                raise InvalidConfigError(f"{what} must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidConfigError(f"methods must be a non-empty subset of {METHODS}, got {bad}")
        if self.truth.mode == "fixed" and len(self.truth.weights) != self.K:
            raise InvalidConfigError(f"fixed truth has {len(self.truth.weights)} Diracs, K={self.K}")
        for key, value in self.gibbs:
            if key not in _GIBBS_KEYS:
                raise InvalidConfigError(f"unknown gibbs option {key!r}")
            if key == "alignment" and value not in ALIGNMENTS:
                raise InvalidConfigError(f"alignment must be one of {ALIGNMENTS}")
        object.__setattr__(self, "N_sweep", tuple(int(n) for n in self.N_sweep))
        object.__setattr__(self, "sigma_e_sweep", tuple(float(s) for s in self.sigma_e_sweep))

    def acquisition(self, N: int) -> AcquisitionConfig:
        T = self.T if self.T is not None else self.window / (N - 1)
        return AcquisitionConfig(self.sigma_h, T, N)

    def gibbs_config(self, seed: int) -> GibbsConfig:
        opts = dict(self.gibbs)
        init_sigma = opts.pop("init_sigma_e", 0.01)
        return GibbsConfig(self.K, seed=seed, init=GibbsState.default(self.K, init_sigma), **opts)

    def cells(self) -> list[tuple[float, int]]:
        return [(s, n) for s in self.sigma_e_sweep for n in self.N_sweep]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gibbs"] = dict(self.gibbs)
        return d

    def digest(self) -> str:
        """Short content hash identifying the spec in records."""
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        d = dict(d)
        truth = d.pop("truth", {}) or {}
        truth = TruthRule(**{k: tuple(v) if isinstance(v, list) else v for k, v in truth.items()})
        gibbs = tuple(sorted((d.pop("gibbs", {}) or {}).items()))
        for key in ("sigma_e_sweep", "N_sweep", "methods"):
            d[key] = tuple(d[key])
        return cls(truth=truth, gibbs=gibbs, **d)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.replace(";", ",").split(",") if p.strip())


def load_spec(path) -> ExperimentSpec:
    """Read an INI experiment file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return spec_from_parser(cp, default_name=Path(path).stem)


def parse_spec(text: str, default_name: str = "experiment") -> ExperimentSpec:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfigError(str(exc)) from exc
    return spec_from_parser(cp, default_name)


def spec_from_parser(cp: configparser.ConfigParser, default_name: str) -> ExperimentSpec:
    if not cp.has_section("experiment"):
        raise InvalidConfigError("missing [experiment] section")
    ex = cp["experiment"]
    version = ex.getint("schema_version", fallback=SPEC_SCHEMA_VERSION)
    if version != SPEC_SCHEMA_VERSION:
        raise InvalidConfigError(
            f"spec schema_version {version} is not supported (expected {SPEC_SCHEMA_VERSION})"
        )
    known = {"schema_version", "name", "k", "sigma_e", "n", "t", "window", "sigma_h",
             "n_seeds", "master_seed", "methods"}
    unknown = set(ex.keys()) - known
    if unknown:
        raise InvalidConfigError(f"unknown [experiment] keys: {sorted(unknown)}")

    try:
        truth_kw: dict = {}
        if cp.has_section("truth"):
            tr = cp["truth"]
            truth_kw["mode"] = tr.get("mode", "random")
            if "weights" in tr:
                truth_kw["weights"] = _floats(tr["weights"])
            if "locations" in tr:
                truth_kw["locations"] = _floats(tr["locations"])
            if "amplitude" in tr:
                lo, hi = _floats(tr["amplitude"])
                truth_kw["amplitude"] = (lo, hi)
            if "min_separation" in tr:
                truth_kw["min_separation"] = tr.getfloat("min_separation")
            if "random_sign" in tr:
                truth_kw["random_sign"] = tr.getboolean("random_sign")

        gibbs = {}
        if cp.has_section("gibbs"):
            for key, value in cp["gibbs"].items():
                if key not in _GIBBS_KEYS:
                    raise InvalidConfigError(f"unknown [gibbs] key {key!r}")
                gibbs[key] = _GIBBS_KEYS[key](value)

        N_sweep = parse_range(ex["n"])
        if any(n != int(n) for n in N_sweep):
            raise InvalidConfigError(f"N values must be integers, got {N_sweep}")
        return ExperimentSpec(
            name=ex.get("name", default_name),
            K=ex.getint("k"),
            sigma_e_sweep=parse_range(ex["sigma_e"]),
            N_sweep=tuple(int(n) for n in N_sweep),
            sigma_h=float(ex["sigma_h"]),
            T=ex.getfloat("t") if "t" in ex else None,
            window=ex.getfloat("window") if "window" in ex else None,
            n_seeds=ex.getint("n_seeds", fallback=25),
            master_seed=ex.getint("master_seed", fallback=0),
            methods=tuple(m.strip() for m in ex.get("methods", "gibbs,gibbs_llse").split(",") if m.strip()),
            truth=TruthRule(**truth_kw),
            gibbs=tuple(sorted(gibbs.items())),
        )
    except KeyError as exc:
        raise InvalidConfigError(f"missing required key {exc.args[0]!r}") from exc
    except (ValueError, TypeError) as exc:
        if isinstance(exc, InvalidConfigError):
            raise
        raise InvalidConfigError(str(exc)) from exc


@dataclass
class RunRecord:
    """Outcome of one method on one ``(sigma_e, N, seed)`` instance.

    Carries everything needed to regenerate the instance: the spec digest,
    the three derived seeds, and the acquisition.  ``E`` is
    :data:`FAILED_ERROR` for failed reconstructions.
    """

    experiment: str
    spec_digest: str
    method: str
    sigma_e: float
    N: int
    K: int
    T: float
    sigma_h: float
    seed_index: int
    truth_seed: int
    noise_seed: int
    chain_seed: int
    truth_c: list
    truth_t: list
    estimate_c: list | None
    estimate_t: list | None
    E: float
    snr_db: float
    sigma_e_estimate: float | None
    wall_clock: float
    status: str
    error: str | None = None
    trace_path: str | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status in ("ok", "projected-roots")

    @property
    def acquisition(self) -> AcquisitionConfig:
        return AcquisitionConfig(self.sigma_h, self.T, self.N)

    @property
    def truth(self) -> FriSignal:
        return FriSignal(self.truth_c, self.truth_t)

    @property
    def estimate(self) -> FriSignal | None:
        if self.estimate_c is None:
            return None
        return FriSignal(self.estimate_c, self.estimate_t)

    def rescore(self) -> float:
        """Recompute ``E`` from the stored truth and estimate."""
        est = self.estimate
        if est is None:
            return FAILED_ERROR
        return reconstruction_error(est, self.truth, self.sigma_h)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        names = {f.name for f in fields(cls)}
        missing = names - set(d) - {"error", "trace_path", "diagnostics"}
        if missing:
            raise KeyError(", ".join(sorted(missing)))
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class Instance:
    """One synthesized problem: truth, clean and noisy samples."""

    acq: AcquisitionConfig
    truth: FriSignal
    z: np.ndarray
    y: np.ndarray
    truth_seed: int
    noise_seed: int
    chain_seed: int


def make_instance(spec: ExperimentSpec, sigma_e: float, N: int, seed_index: int) -> Instance:
    acq = spec.acquisition(N)
    lo, hi = acq.window
    truth_seed = derive_seed(spec.master_seed, _TRUTH, seed_index, _float_bits(lo), _float_bits(hi))
    noise_seed = derive_seed(spec.master_seed, _NOISE, N, seed_index)
    chain_seed = derive_seed(spec.master_seed, _CHAIN, N, _float_bits(sigma_e), seed_index)
    truth = spec.truth.draw(np.random.default_rng(truth_seed), spec.K, acq.window)
    z = synthesize_samples(truth, acq).values
    y = add_noise(z, NoiseSpec(sigma_e, noise_seed)).values
    return Instance(acq, truth, z, y, truth_seed, noise_seed, chain_seed)


def _score(est: FriSignal | None, truth: FriSignal, sigma_h: float) -> float:
    return FAILED_ERROR if est is None else reconstruction_error(est, truth, sigma_h)


def run_instance(
    spec: ExperimentSpec,
    sigma_e: float,
    N: int,
    seed_index: int,
    trace_dir: str | None = None,
    backend: str | None = None,
) -> list[RunRecord]:
    """All requested methods on one instance; never raises for a method failure."""
    inst = make_instance(spec, sigma_e, N, seed_index)
    acq = inst.acq
    snr = snr_db(inst.z, inst.y)
    base = dict(
        experiment=spec.name,
        spec_digest=spec.digest(),
        sigma_e=float(sigma_e),
        N=int(N),
        K=spec.K,
        T=acq.T,
        sigma_h=acq.sigma_h,
        seed_index=int(seed_index),
        truth_seed=inst.truth_seed,
        noise_seed=inst.noise_seed,
        chain_seed=inst.chain_seed,
        truth_c=inst.truth.c.tolist(),
        truth_t=inst.truth.t.tolist(),
        snr_db=snr,
    )
    out: list[RunRecord] = []

    def record(method, est, sigma_hat, elapsed, status, error=None, trace_path=None, diag=None):
        est = est.canonical() if est is not None else None
        out.append(
            RunRecord(
                method=method,
                estimate_c=None if est is None else est.c.tolist(),
                estimate_t=None if est is None else est.t.tolist(),
                E=_score(est, inst.truth, acq.sigma_h),
                sigma_e_estimate=sigma_hat,
                wall_clock=elapsed,
                status=status,
                error=error,
                trace_path=trace_path,
                diagnostics=diag or {},
                **base,
            )
        )

    wants_chain = [m for m in spec.methods if m in ("gibbs", "gibbs_llse")]
    if wants_chain:
        start = time.perf_counter()
        trace_path = None
        try:
            trace, mmse = run_gibbs(inst.y, acq, spec.gibbs_config(inst.chain_seed), backend=backend)
            chain_time = time.perf_counter() - start
            diag = {
                "rejection_attempts": trace.rejection_attempts,
                "rejection_fallbacks": trace.rejection_fallback_count,
                "backend": trace.backend,
            }
            if trace_dir is not None:
                from .records import write_trace

                trace_path = str(
                    Path(trace_dir) / f"{spec.name}_se{sigma_e:g}_N{N}_s{seed_index}.csv"
                )
                write_trace(trace, trace_path)
            raw = mmse.signal()
        except FriError as exc:
            elapsed = time.perf_counter() - start
            for m in wants_chain:
                record(m, None, None, elapsed, "failed", f"{type(exc).__name__}: {exc}")
        else:
            if "gibbs" in spec.methods:
                record("gibbs", raw, mmse.sigma_e, chain_time, "ok", None, trace_path, diag)
            if "gibbs_llse" in spec.methods:
                start = time.perf_counter()
                try:
                    c = llse_refine(inst.y, raw.t, acq)
                except FriError as exc:
                    record("gibbs_llse", None, mmse.sigma_e, chain_time, "failed",
                           f"{type(exc).__name__}: {exc}", trace_path, diag)
                else:
                    elapsed = chain_time + time.perf_counter() - start
                    record("gibbs_llse", FriSignal(c, raw.t), mmse.sigma_e, elapsed, "ok",
                           None, trace_path, diag)

    if "annihilator" in spec.methods:
        start = time.perf_counter()
        res = annihilate_reconstruct(inst.y, spec.K, acq)
        diag = {k: v for k, v in res.diagnostics.items() if k != "singular_values"}
        record("annihilator", res.signal, None, time.perf_counter() - start, res.status,
               res.error, None, diag)

    # keep the spec's method order
    order = {m: i for i, m in enumerate(spec.methods)}
    out.sort(key=lambda r: order[r.method])
    return out


def _run_task(args):
    return run_instance(*args)


def resolve_jobs(jobs: int | None = None) -> int:
    """``jobs`` if given, else ``$FRIGIBBS_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get(JOBS_ENV_VAR, "").strip()
        try:
            jobs = int(env) if env else 1
        except ValueError as exc:
            raise InvalidConfigError(f"{JOBS_ENV_VAR}={env!r} is not an integer") from exc
    if jobs < 1:
        raise InvalidConfigError(f"jobs must be >= 1, got {jobs}")
    return jobs


def run_experiment(
    spec: ExperimentSpec,
    jobs: int | None = None,
    trace_dir: str | None = None,
    backend: str | None = None,
) -> list[RunRecord]:
    """Every ``(sigma_e, N, seed, method)`` run, ordered by cell then seed.

    The order and content of the result do not depend on ``jobs``.
    """
    jobs = resolve_jobs(jobs)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    tasks = [
        (spec, s, n, i, trace_dir, backend)
        for s, n in spec.cells()
        for i in range(spec.n_seeds)
    ]
    log.info("%s: %d instances on %d worker(s)", spec.name, len(tasks), jobs)
    if jobs == 1:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [r for batch in results for r in batch]


@dataclass(frozen=True)
class SummaryRow:
    sigma_e: float
    N: int
    method: str
    mean_E: float
    std_E: float
    mean_snr_db: float
    n_ok: int
    n_failed: int


def summarize(records: list[RunRecord], methods: tuple[str, ...] | None = None) -> list[SummaryRow]:
    """Per-cell means over seeds, sorted by ``sigma_e``, ``N``, then method.

    Failed runs enter ``mean_E`` with :data:`FAILED_ERROR` and are counted
    in ``n_failed``.  ``std_E`` is the population standard deviation.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.sigma_e, r.N, r.method), []).append(r)
    order = {m: i for i, m in enumerate(methods or METHODS)}
    rows = []
    for (s, n, m), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], order.get(kv[0][2], 99), kv[0][2])):
        E = np.array([r.E for r in rs])
        snr = np.array([r.snr_db for r in rs])
        rows.append(
            SummaryRow(
                sigma_e=s,
                N=n,
                method=m,
                mean_E=float(E.mean()),
                std_E=float(E.std()),
                mean_snr_db=INFINITE_SNR if np.any(np.isinf(snr)) else float(snr.mean()),
                n_ok=sum(r.ok for r in rs),
                n_failed=sum(not r.ok for r in rs),
            )
        )
    return rows


def snr_table(spec: ExperimentSpec) -> dict[tuple[float, int], float]:
    """Mean SNR (dB) over seeds for every ``(sigma_e, N)`` cell.

    Only synthesizes the data; no reconstruction is run.  Cells with
    ``sigma_e = 0`` map to :data:`INFINITE_SNR`.
    """
    table = {}
    for s, n in spec.cells():
        vals = [snr_db(inst.z, inst.y) for inst in
                (make_instance(spec, s, n, i) for i in range(spec.n_seeds))]
        table[(s, n)] = INFINITE_SNR if any(math.isinf(v) for v in vals) else float(np.mean(vals))
    return table


def with_overrides(spec: ExperimentSpec, **changes) -> ExperimentSpec:
    """Copy of ``spec`` with top-level fields replaced (``None`` values ignored)."""
    return replace(spec, **{k: v for k, v in changes.items() if v is not None})


def builtin_specs() -> list[str]:
    """Names of the spec files shipped with the package."""
    from importlib.resources import files

    return sorted(p.name for p in files("frigibbs").joinpath("configs").iterdir()
                  if p.name.endswith(".cfg"))


def find_spec_file(name) -> Path:
    """``name`` itself if it exists, else the packaged spec of that name."""
    path = Path(name)
    if path.exists():
        return path
    from importlib.resources import files

    stem = path.name if path.suffix else path.name + ".cfg"
    packaged = files("frigibbs").joinpath("configs", stem)
    if packaged.is_file():
        return Path(str(packaged))
    raise InvalidConfigError(
        f"no spec file {str(name)!r}; packaged specs: {', '.join(builtin_specs())}"
    )
