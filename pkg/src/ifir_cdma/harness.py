"""Monte-Carlo link simulation: scenarios, trials, baselines, export.

A scenario fixes the system (processing gain, users, channel profile,
noise), the receiver (structure, algorithm, mode) and the experiment
(symbols, runs, seed).  `run_trial` simulates one seeded run symbol by
symbol and records MSE, windowed SINR and cumulative BER;
`run_campaign` averages independent runs with spawned sub-seeds.

Everything is deterministic for a fixed (config, seed): one Generator
per trial drives channel, symbols and noise in a fixed order, and the
campaign reduction is ordered by run index regardless of worker count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import adaptive, cmv, signal_model
from .interpolation import DecimationOperator, detect, make_decimation

CSV_COLUMNS = ["iteration", "mse", "sinr_db", "ber", "algorithm", "L", "N_I", "seed"]
SINR_WINDOW = 0.98

ALGORITHMS = ("lms", "rls", "cmv-sg", "cmv-rls", "rake", "pd-lms", "pd-rls")
MODES = ("training", "decision-directed", "blind")


class ConfigError(ValueError):
    """Scenario configuration violates an invariant."""


@dataclass
class ScenarioConfig:
    """Full description of one simulated scenario.

    channel_profile: "fixed" uses path_powers/path_delays as given;
    "random-delays" keeps the powers but draws the delays per run (first
    path at zero, second uniform on 1..4 chips, third uniform up to
    delay 5), the layout used for the randomised multipath experiments.
    Interferer powers are dB offsets against the desired user, either
    fixed per user or log-normal with `interferer_sigma_db`.
    """

    n: int = 31                       # processing gain (31 or 63)
    k: int = 8                        # number of users
    l_p: int = 6                      # modelled delay spread (chips)
    l: int = 2                        # decimation factor
    n_i: int = 3                      # interpolator length
    algorithm: str = "rls"
    mode: str = "training"
    n_tr: int = 200                   # training symbols before decision-directed
    ebn0_db: float = 12.0
    interferer_db: list = None        # fixed per-interferer offsets (len k-1)
    interferer_sigma_db: float = 0.0  # log-normal power spread, 0 = equal power
    f_dt: float = 0.0                 # normalized Doppler, cycles/symbol
    channel_profile: str = "random-delays"
    path_powers: list = field(default_factory=lambda: [1.0, 0.5012, 0.3162])
    path_delays: list = None          # used by the "fixed" profile
    symbols: int = 2000
    runs: int = 50
    seed: int = 1
    mu0: float = 0.1                  # gradient convergence factor (filter)
    eta0: float = 0.05                # gradient convergence factor (interpolator)
    normalized_steps: bool = True
    alpha: float = 0.998              # RLS forgetting factor
    delta: float = 100.0              # RLS inverse initialisation scale
    freeze_interpolator: bool = False
    interpolator_init: str = "impulse"   # or "linear"
    known_channel: bool = True        # blind modes: use true g instead of a tracker
    pd_rank: int = 8                  # projected dimension for the pd baselines
    normalize_channel: bool = True    # scale path powers to unit total power

    def __post_init__(self):
        self.validate()

    @property
    def m(self) -> int:
        return self.n + self.l_p - 1

    def validate(self) -> None:
        if self.n not in (31, 63):
            raise ConfigError("processing gain must be 31 or 63")
        gold_family = self.n + 2
        if not 1 <= self.k <= gold_family:
            raise ConfigError(f"user count must be in [1, {gold_family}]")
        for name in ("l_p", "l", "n_i", "symbols", "runs"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.l > self.m:
            raise ConfigError("decimation factor exceeds the received length")
        m_red = make_decimation(self.m, self.l).m_red
        if self.n_i > m_red:
            raise ConfigError(f"interpolator length {self.n_i} exceeds M/L = {m_red}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.algorithm in ("cmv-sg", "cmv-rls") and self.mode != "blind":
            raise ConfigError("CMV algorithms run in blind mode")
        if self.mode == "blind" and self.algorithm in ("lms", "rls", "rake", "pd-lms", "pd-rls"):
            raise ConfigError(f"{self.algorithm} needs training or decision-directed mode")
        if not 0 < self.alpha <= 1:
            raise ConfigError("forgetting factor must lie in (0, 1]")
        if self.n_tr < 0 or (self.mode != "blind" and self.n_tr > self.symbols
                             and self.mode == "decision-directed"):
            raise ConfigError("training length must fit in the symbol budget")
        if self.channel_profile not in ("fixed", "random-delays"):
            raise ConfigError("channel_profile must be 'fixed' or 'random-delays'")
        if self.channel_profile == "fixed" and self.path_delays is None:
            raise ConfigError("fixed channel profile needs path_delays")
        if self.interferer_db is not None and len(self.interferer_db) != self.k - 1:
            raise ConfigError("interferer_db must list k - 1 offsets")
        if not 1 <= self.pd_rank <= self.m:
            raise ConfigError("pd_rank must be in [1, M]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class MetricSeries:
    """Per-iteration metrics for one run (or a run average)."""

    mse: np.ndarray
    sinr_db: np.ndarray
    ber: np.ndarray
    metadata: dict

    def __post_init__(self):
        if not (len(self.mse) == len(self.sinr_db) == len(self.ber)):
            raise ValueError("metric series lengths differ")

    def summary(self, tail: int = 200) -> dict:
        tail = min(tail, len(self.mse))
        return {
            "final_mse": float(np.mean(self.mse[-tail:])),
            "final_sinr_db": float(np.mean(self.sinr_db[-tail:])),
            "final_ber": float(self.ber[-1]),
        }


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------

def _draw_channel(cfg: ScenarioConfig, rng: np.random.Generator) -> signal_model.ChannelRealization:
    powers = np.asarray(cfg.path_powers, dtype=float)
    if cfg.channel_profile == "random-delays":
        delays = [0]
        if powers.size > 1:
            tau2 = int(rng.integers(1, 5))
            delays.append(tau2)
            if powers.size > 2:
                delays.append(tau2 + int(rng.integers(1, 6 - tau2)))
            delays = delays[:powers.size]
        delays = np.asarray(delays)
    else:
        delays = np.asarray(cfg.path_delays, dtype=int)
    if delays.max(initial=0) >= cfg.l_p:
        raise ConfigError("path delays exceed the modelled spread l_p")
    return signal_model.make_channel(powers, delays, cfg.l_p, doppler=cfg.f_dt, rng=rng,
                                     normalize=cfg.normalize_channel or cfg.f_dt > 0)


def _draw_amplitudes(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    amps = np.ones(cfg.k)
    if cfg.k > 1:
        if cfg.interferer_db is not None:
            offs = np.asarray(cfg.interferer_db, dtype=float)
        elif cfg.interferer_sigma_db > 0:
            offs = rng.normal(0.0, cfg.interferer_sigma_db, cfg.k - 1)
        else:
            offs = np.zeros(cfg.k - 1)
        amps[1:] = 10.0 ** (offs / 20.0)
    return amps


def _interpolator_init(cfg: ScenarioConfig) -> np.ndarray:
    if cfg.interpolator_init == "impulse":
        v = np.zeros(cfg.n_i, dtype=complex)
        v[0] = 1.0
    elif cfg.interpolator_init == "linear":
        # triangular kernel, the classic fixed interpolator
        half = (cfg.n_i - 1) / 2.0
        v = np.array([1.0 - abs(i - half) / (half + 1.0) for i in range(cfg.n_i)],
                     dtype=complex)
    else:
        raise ConfigError("interpolator_init must be 'impulse' or 'linear'")
    return v / np.linalg.norm(v)


class _Link:
    """One run's synthesized downlink, stepped symbol by symbol."""

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        degree = 5 if cfg.n == 31 else 6
        self.spreading = signal_model.gen_gold_set(degree, cfg.k)
        self.codes = self.spreading.codes
        self.channel = _draw_channel(cfg, rng)
        self.amps = _draw_amplitudes(cfg, rng)
        self.sigma2 = 10.0 ** (-cfg.ebn0_db / 10.0)
        self.l_s = signal_model.isi_span(cfg.l_p, cfg.n)
        self.m = cfg.m
        span = 2 * self.l_s - 1
        self.bits = np.where(rng.random((cfg.k, cfg.symbols + span - 1)) < 0.5, -1.0, 1.0)
        self._static = cfg.f_dt <= 0
        if self._static:
            stream = (self.amps[:, None, None] * self.bits[:, :, None]
                      * self.codes[:, None, :]).sum(axis=0).ravel()
            self._clean = np.convolve(stream, self.channel.gains)
        self._refresh_signature()

    def _refresh_signature(self):
        self.signature = signal_model.effective_signature(self.codes[0], self.channel.gains)

    def step(self, i: int):
        """Received vector, desired symbol, and desired-only component for symbol i."""
        cfg = self.cfg
        off = self.l_s - 1
        b = self.bits[0, i + off]
        if self._static:
            clean = self._clean[(i + off) * cfg.n:(i + off) * cfg.n + self.m]
        else:
            signal_model.fading_step(self.channel, self.rng)
            self._refresh_signature()
            frame = signal_model.SymbolFrame(
                bits=self.bits[:, i:i + 2 * self.l_s - 1], amplitudes=self.amps)
            clean = signal_model.synthesize_received(
                self.spreading, self.channel, frame, 0.0, self.rng)
        noise = np.sqrt(self.sigma2 / 2.0) * (
            self.rng.standard_normal(self.m) + 1j * self.rng.standard_normal(self.m))
        r = clean + noise
        r_des = (self.amps[0] * b) * self.signature
        return r, b, r_des


class _SinrMeter:
    """Exponentially windowed ground-truth SINR of a linear receiver."""

    def __init__(self, window: float = SINR_WINDOW):
        self.window = window
        self.num = 0.0
        self.den = 0.0

    def update(self, out_des: complex, out_rest: complex) -> float:
        w = self.window
        self.num = w * self.num + (1 - w) * abs(out_des) ** 2
        self.den = w * self.den + (1 - w) * abs(out_rest) ** 2
        return 10.0 * np.log10(max(self.num, 1e-300) / max(self.den, 1e-300))


def rake_baseline(r: np.ndarray, channel_estimate: np.ndarray,
                  code: np.ndarray) -> complex:
    """Matched filter to the estimated effective signature.

    Output is scaled by the signature energy so a clean single-user
    vector reproduces the symbol amplitude.
    """
    sig = signal_model.effective_signature(code, channel_estimate)
    energy = np.real(np.vdot(sig, sig))
    if energy <= 0:
        raise ValueError("channel estimate has no energy")
    return complex(np.vdot(sig, r[:sig.size]) / energy)


def pd_projection(code: np.ndarray, m: int, rank: int) -> np.ndarray:
    """Partial-despreading projection: columns hold disjoint signature segments.

    The M samples are split into `rank` contiguous segments; column j is
    the zero-padded signature restricted to segment j (an identity
    pass-through on segments past the signature support, so rank = M
    spans the full space and rank = 1 is the plain despreader).
    """
    code = np.asarray(code, dtype=complex)
    padded = np.zeros(m, dtype=complex)
    padded[:code.size] = code
    bounds = np.linspace(0, m, rank + 1).astype(int)
    t = np.zeros((m, rank), dtype=complex)
    for j in range(rank):
        seg = slice(bounds[j], bounds[j + 1])
        col = padded[seg]
        if np.any(col):
            t[seg, j] = col
        else:
            t[seg, j] = 1.0
    return t


# ---------------------------------------------------------------------------
# trial loops
# ---------------------------------------------------------------------------

def _series_metadata(cfg: ScenarioConfig, seed: int) -> dict:
    meta = cfg.to_dict()
    meta["run_seed"] = int(seed)
    return meta


def _run_int_trial(cfg: ScenarioConfig, link: _Link, seed) -> MetricSeries:
    dec = make_decimation(cfg.m, cfg.l)
    v0 = _interpolator_init(cfg)
    eta0 = 0.0 if cfg.freeze_interpolator else cfg.eta0
    if cfg.algorithm == "lms":
        st = adaptive.make_trained_sg(dec, cfg.n_i, cfg.mu0, eta0,
                                      normalized=cfg.normalized_steps, v0=v0)
        step = lambda r, b: adaptive.lms_step(st, r, b)
    elif cfg.algorithm == "rls":
        st = adaptive.make_trained_rls(dec, cfg.n_i, alpha=cfg.alpha,
                                       delta=cfg.delta, v0=v0)
        step = lambda r, b: adaptive.rls_step(st, r, b,
                                              adapt_v=not cfg.freeze_interpolator)
    else:
        g_true = link.channel.gains
        cons = cmv.build_constraints(link.codes[0], cfg.l_p, dec, g=g_true)
        tracker = None
        if not cfg.known_channel:
            tracker = adaptive.SgChannelTracker(cons.c, alpha=cfg.alpha)
        if cfg.algorithm == "cmv-sg":
            st = adaptive.make_blind_sg(cons, cfg.n_i, cfg.mu0, cfg.eta0,
                                        normalized=cfg.normalized_steps,
                                        tracker=tracker, v0=v0)
            step = lambda r, b: adaptive.cmv_sg_step(st, r)
        else:
            st = adaptive.make_blind_rls(cons, cfg.n_i, alpha=cfg.alpha,
                                         delta=cfg.delta, tracker=tracker, v0=v0)
            step = lambda r, b: adaptive.cmv_rls_step(st, r)

    meter = _SinrMeter()
    t = cfg.symbols
    mse = np.zeros(t)
    sinr = np.zeros(t)
    ber = np.zeros(t)
    errors = 0
    decided = 0
    blind = cfg.mode == "blind"
    for i in range(t):
        r, b, r_des = link.step(i)
        rec = st.state
        rbar = _project(rec.v, r, dec)
        x = complex(np.vdot(rec.w, rbar))
        if blind:
            x = _align_phase(x, st, link)
        bhat = detect(x)
        mse[i] = abs(b - x) ** 2
        if blind or i >= cfg.n_tr:
            decided += 1
            errors += bhat != b
        ber[i] = errors / max(decided, 1)
        if blind:
            step(r, b)
        else:
            step(r, b if (cfg.mode == "training" or i < cfg.n_tr) else bhat)
        rec = st.state
        rbar_des = _project(rec.v, r_des, dec)
        rbar_all = _project(rec.v, r, dec)
        out_des = np.vdot(rec.w, rbar_des)
        sinr[i] = meter.update(out_des, np.vdot(rec.w, rbar_all) - out_des)
    return MetricSeries(mse=mse, sinr_db=sinr, ber=ber,
                        metadata=_series_metadata(cfg, seed))


def _project(v, r, dec):
    from .interpolation import build_re_matrix
    return build_re_matrix(r, v.size, dec).T @ v.conj()


def _align_phase(x: complex, st, link: _Link) -> complex:
    """Remove the blind estimate's phase ambiguity using the true channel.

    Simulation stand-in for ideal phase tracking: rotate the decision
    statistic by the phase the channel tracker introduced relative to
    the first true path.
    """
    g_hat = getattr(st, "g_hat", None)
    if g_hat is None and getattr(st, "tracker", None) is not None:
        g_hat = st.tracker.g_hat
    if g_hat is None:
        return x
    g_true = link.channel.gains
    ref = int(np.argmax(np.abs(g_true)))
    if abs(g_hat[ref]) < 1e-12 or abs(g_true[ref]) < 1e-12:
        return x
    rot = (g_true[ref] / abs(g_true[ref])) / (g_hat[ref] / abs(g_hat[ref]))
    return x * np.conj(rot)


def _run_projected_trial(cfg: ScenarioConfig, link: _Link, seed) -> MetricSeries:
    """RAKE and partial-despreading baselines: adapt in a projected space."""
    if cfg.algorithm == "rake":
        proj = cmv.shifted_signatures(link.codes[0], cfg.l_p)
        fixed_combiner = True
    else:
        proj = pd_projection(link.codes[0], cfg.m, cfg.pd_rank)
        fixed_combiner = False
    dim = proj.shape[1]
    w = np.zeros(dim, dtype=complex)
    p_inv = cfg.delta * np.eye(dim, dtype=complex)
    meter = _SinrMeter()
    t = cfg.symbols
    mse = np.zeros(t)
    sinr = np.zeros(t)
    ber = np.zeros(t)
    errors = 0
    decided = 0
    g_hat = None
    acc = np.zeros(cfg.l_p, dtype=complex)
    for i in range(t):
        r, b, r_des = link.step(i)
        y = proj.conj().T @ r
        if fixed_combiner and i < cfg.n_tr:
            # combiner = least-squares channel estimate from training symbols
            acc += np.conj(b) * y
            g_hat = np.linalg.solve(proj.conj().T @ proj, acc / (i + 1))
            w = g_hat / max(np.real(np.vdot(g_hat, proj.conj().T @ (proj @ g_hat))), 1e-12)
        x = complex(np.vdot(w, y))
        bhat = detect(x)
        mse[i] = abs(b - x) ** 2
        if i >= cfg.n_tr:
            decided += 1
            errors += bhat != b
        ber[i] = errors / max(decided, 1)
        if not fixed_combiner:
            target = b if (cfg.mode == "training" or i < cfg.n_tr) else bhat
            xi = target - x
            if cfg.algorithm == "pd-rls":
                py = p_inv @ y
                denom = cfg.alpha + np.real(np.vdot(y, py))
                gain = py / denom
                p_inv = (p_inv - np.outer(gain, py.conj())) / cfg.alpha
                p_inv = 0.5 * (p_inv + p_inv.conj().T)
                w = w + gain * np.conj(xi)
            else:
                ny = np.real(np.vdot(y, y))
                if ny > 1e-30:
                    w = w + (cfg.mu0 / ny) * np.conj(xi) * y
        y_des = proj.conj().T @ r_des
        out_des = np.vdot(w, y_des)
        sinr[i] = meter.update(out_des, np.vdot(w, y) - out_des)
    return MetricSeries(mse=mse, sinr_db=sinr, ber=ber,
                        metadata=_series_metadata(cfg, seed))


def run_trial(cfg: ScenarioConfig, run_seed) -> MetricSeries:
    """Simulate one seeded run of the configured scenario."""
    cfg.validate()
    rng = np.random.default_rng(run_seed)
    link = _Link(cfg, rng)
    if cfg.algorithm in ("rake", "pd-lms", "pd-rls"):
        return _run_projected_trial(cfg, link, run_seed)
    return _run_int_trial(cfg, link, run_seed)


def iter_symbols(cfg: ScenarioConfig, run_seed):
    """Yield (r, b, r_desired, link) per symbol of one seeded scenario run.

    Drives the same synthesized downlink as `run_trial` without any
    receiver attached; useful for custom adaptation protocols and for
    validating analysis predictions against simulation.
    """
    cfg.validate()
    rng = np.random.default_rng(run_seed)
    link = _Link(cfg, rng)
    for i in range(cfg.symbols):
        r, b, r_des = link.step(i)
        yield r, b, r_des, link


def pd_baseline(cfg: ScenarioConfig, run_seed) -> MetricSeries:
    """Partial-despreading baseline trial (cfg.algorithm must be pd-*)."""
    if cfg.algorithm not in ("pd-lms", "pd-rls"):
        raise ConfigError("pd_baseline expects a pd-lms or pd-rls scenario")
    return run_trial(cfg, run_seed)


def _trial_for_campaign(args):
    cfg_dict, seed = args
    series = run_trial(ScenarioConfig.from_dict(cfg_dict), seed)
    return series.mse, series.sinr_db, series.ber


def run_campaign(cfg: ScenarioConfig, runs: int | None = None,
                 workers: int = 1) -> MetricSeries:
    """Average `runs` independent trials (spawned sub-seeds of cfg.seed).

    MSE and the SINR's power ratio average linearly across runs; BER
    averages directly.  The reduction is ordered by run index, so the
    result is independent of `workers`.
    """
    runs = cfg.runs if runs is None else runs
    seeds = [s.generate_state(1)[0] for s in np.random.SeedSequence(cfg.seed).spawn(runs)]
    jobs = [(cfg.to_dict(), int(seed)) for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_for_campaign, jobs))
    else:
        results = [_trial_for_campaign(j) for j in jobs]
    mse = np.mean([res[0] for res in results], axis=0)
    sinr_lin = np.mean([10.0 ** (res[1] / 10.0) for res in results], axis=0)
    ber = np.mean([res[2] for res in results], axis=0)
    meta = cfg.to_dict()
    meta["runs_averaged"] = runs
    meta["run_seed"] = cfg.seed
    return MetricSeries(mse=mse, sinr_db=10.0 * np.log10(np.maximum(sinr_lin, 1e-300)),
                        ber=ber, metadata=meta)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _rows(series: MetricSeries):
    meta = series.metadata
    alg = meta.get("algorithm", "")
    l = meta.get("l", "")
    n_i = meta.get("n_i", "")
    seed = meta.get("run_seed", meta.get("seed", ""))
    for i in range(len(series.mse)):
        yield [i, float(series.mse[i]), float(series.sinr_db[i]),
               float(series.ber[i]), alg, l, n_i, seed]


def export_csv(series: MetricSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        writer.writerows(_rows(series))


def export_json(series: MetricSeries, path) -> None:
    doc = {
        "metadata": series.metadata,
        "columns": CSV_COLUMNS,
        "series": {
            "iteration": list(range(len(series.mse))),
            "mse": [float(x) for x in series.mse],
            "sinr_db": [float(x) for x in series.sinr_db],
            "ber": [float(x) for x in series.ber],
        },
        "summary": series.summary(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def export(series: MetricSeries, path, fmt: str = "csv") -> None:
    """Write a metric series to disk as CSV or JSON (stable column order)."""
    fmt = fmt.lower()
    if fmt == "csv":
        export_csv(series, path)
    elif fmt == "json":
        export_json(series, path)
    else:
        raise ValueError("format must be 'csv' or 'json'")
