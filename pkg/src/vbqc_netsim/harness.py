"""Scenario runner: seeded Monte Carlo trials of registration, authentication and computation."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import adversary as adv_mod
from .authentication import run_auth_entangled, run_auth_key_encoded
from .netsim import CA, LB_A, LB_B, Network, PartyContext, Session, client, fifo_dispatch, server, stream
from .primitives import MAX_GRAPH
from .registration import Abort, RawKey, RegistrationParams, Variant, run_registration
from .vbqc import (ClientKind, MeasurementPattern, OutputKind, QubitClass, StabilizerRunParams, builtin_pattern,
                   deterministic_output, ideal_output_state, run_receive_and_measure, run_stabilizer_verified,
                   run_trap_verified, verif_bound, with_traps)

PROTOCOLS = ("ram", "pas", "cb", "shan-baseline")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class ScenarioConfig:
    protocol: str = "ram"
    name: str = ""
    m_clients: int = 1
    n_servers: int = 1
    trials: int = 100
    seed: int = 0
    noise: float = 0.0
    # registration
    m: int = 512
    l: int = 8
    k: int = 8
    sample_fraction: float = 0.25
    error_threshold: float | None = None
    decoy_threshold: float | None = None
    min_key_length: int | None = None
    max_rounds: int = 64
    # authentication
    auth_k: int = 8
    auth_key_length: int = 32
    auth_decoys: int = 8
    # computation
    pattern: object = "chain:4"
    N: int | None = None
    alpha: int = 2
    beta: int = 8
    traps: int = 1
    quantum_output: bool = False
    # attack
    adversary: str = "none"
    adversary_params: dict = field(default_factory=dict)

    @property
    def entangled_auth(self) -> bool:
        return self.protocol in ("ram", "shan-baseline")

    @property
    def trap_based(self) -> bool:
        return self.protocol in ("pas", "cb")

    def threshold(self, explicit: float | None) -> float:
        # a noisy channel needs slack; a clean one tolerates nothing
        if explicit is not None:
            return explicit
        return 0.05 if self.noise > 0 else 0.0

    def key_length(self) -> int:
        if self.min_key_length is not None:
            return self.min_key_length
        return self.auth_key_length if not self.entangled_auth else 16

    def base_pattern(self) -> MeasurementPattern:
        if isinstance(self.pattern, str):
            return builtin_pattern(self.pattern)
        return MeasurementPattern.from_dict(self.pattern)

    def run_pattern(self) -> MeasurementPattern:
        """The pattern the server actually executes (traps added for trap protocols)."""
        p = self.base_pattern()
        if self.trap_based and not p.vertices(QubitClass.TRAP):
            p = with_traps(p, self.traps)
        return p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if v is not None}


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_INT_FIELDS = {"m_clients", "n_servers", "trials", "seed", "m", "l", "k", "min_key_length", "max_rounds", "auth_k",
               "auth_key_length", "auth_decoys", "N", "alpha", "beta", "traps"}
_FLOAT_FIELDS = {"noise", "sample_fraction", "error_threshold", "decoy_threshold"}


def config_from_dict(d: dict) -> ScenarioConfig:
    unknown = sorted(set(d) - set(_FIELDS))
    if unknown:
        raise ConfigError([f"unknown key {k!r}" for k in unknown])
    bad = []
    for k, v in d.items():
        if k in _INT_FIELDS and (isinstance(v, bool) or not isinstance(v, int)):
            bad.append(f"{k}: expected an integer")
        elif k in _FLOAT_FIELDS and (isinstance(v, bool) or not isinstance(v, (int, float))):
            bad.append(f"{k}: expected a number")
        elif k in ("protocol", "name", "adversary") and not isinstance(v, str):
            bad.append(f"{k}: expected a string")
        elif k == "quantum_output" and not isinstance(v, bool):
            bad.append(f"{k}: expected true or false")
        elif k == "adversary_params" and not isinstance(v, dict):
            bad.append(f"{k}: expected a table")
        elif k == "pattern" and not isinstance(v, (str, dict)):
            bad.append(f"{k}: expected a pattern name or table")
    if bad:
        raise ConfigError(bad)
    return ScenarioConfig(**d)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with path.open("rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([f"{path}: {exc}"]) from exc
    cfg = config_from_dict(data)
    if not cfg.name:
        cfg.name = path.stem
    return cfg


def validate(cfg: ScenarioConfig) -> list[str]:
    """All violations, or an empty list when the config can run."""
    out = []
    if cfg.protocol not in PROTOCOLS:
        out.append(f"protocol: must be one of {', '.join(PROTOCOLS)}")
    for name in ("trials", "m_clients", "n_servers", "m", "l", "k", "max_rounds", "auth_k", "alpha", "beta", "traps"):
        if getattr(cfg, name) < 1:
            out.append(f"{name}: must be at least 1")
    if cfg.auth_decoys < 0:
        out.append("auth_decoys: must be non-negative")
    if not 0 <= cfg.noise <= 1:
        out.append("noise: must be a probability")
    if not 0 < cfg.sample_fraction < 1:
        out.append("sample_fraction: must lie strictly between 0 and 1")
    for name in ("error_threshold", "decoy_threshold"):
        v = getattr(cfg, name)
        if v is not None and not 0 <= v <= 1:
            out.append(f"{name}: must lie in [0, 1]")
    if cfg.auth_key_length < 2 or cfg.auth_key_length % 2:
        out.append("auth_key_length: key-encoded authentication needs an even length of at least 2")
    if cfg.protocol in ("pas", "cb") and cfg.key_length() < cfg.auth_key_length:
        out.append("min_key_length: shorter than auth_key_length")
    if cfg.seed < 0 or cfg.seed >= 2**64:
        out.append("seed: must fit in 64 bits")
    try:
        base = cfg.base_pattern()
    except (ValueError, KeyError, TypeError) as exc:
        return out + [f"pattern: {exc}"]
    if base.n > MAX_GRAPH:
        out.append(f"capacity: pattern has {base.n} vertices, limit {MAX_GRAPH}")
        return out
    try:
        run = cfg.run_pattern() if cfg.protocol in PROTOCOLS else base
    except ValueError as exc:
        return out + [f"pattern: {exc}"]
    if run.n > MAX_GRAPH:
        out.append(f"capacity: pattern with traps has {run.n} vertices, limit {MAX_GRAPH}")
    out += [f"pattern: {v}" if not v.startswith(("trap not isolated", "capacity")) else v for v in run.violations()]
    if cfg.N is not None and cfg.N != run.n:
        out.append(f"N: pattern has {run.n} vertices, config says {cfg.N}")
    if cfg.protocol in ("ram", "shan-baseline") and run.vertices(QubitClass.TRAP):
        out.append("pattern: receive-and-measure protocols take computation-only patterns")
    if cfg.adversary not in adv_mod.KINDS:
        out.append(f"adversary: unknown kind {cfg.adversary!r}")
    else:
        try:
            adv_mod.AdversarySpec(cfg.adversary, dict(cfg.adversary_params)).build(np.random.default_rng(0))
        except (TypeError, ValueError) as exc:
            out.append(f"adversary_params: {exc}")
    return out


# -- trials ----------------------------------------------------------------


@dataclass
class SessionReport:
    client: str
    server: str
    registration: str
    key_length: int = 0
    rounds: int = 0
    kept_fraction: float | None = None
    decoy_abort: bool = False
    sample_rate: float | None = None
    auth: bool | None = None
    auth_reason: str = ""
    vbqc: bool | None = None
    vbqc_reason: str = ""
    output: list | None = None
    incorrect: float | None = None


@dataclass
class TrialReport:
    trial: int
    sessions: list
    log: str = ""

    def to_dict(self) -> dict:
        return {"trial": self.trial, "sessions": [dataclasses.asdict(s) for s in self.sessions]}


class TrialFault(RuntimeError):
    def __init__(self, trial: int, exc: Exception):
        self.trial = trial
        super().__init__(f"trial {trial}: {type(exc).__name__}: {exc}")


def new_session(seed: int = 0, trial: int = 0, adversary=None, noise: float = 0.0, client_index: int = 0,
                n_servers: int = 1) -> Session:
    """A single client/server session with fresh per-party streams."""
    adv = adversary if adversary is not None else adv_mod.Adversary(stream(seed, trial, "adversary"))
    net = Network(noise=noise, noise_rng=stream(seed, trial, "channel"), interceptors=adv.interceptors())
    c = client(client_index)
    sv = server(client_index % n_servers)
    ctx = lambda p: PartyContext(p, stream(seed, trial, str(p)))
    return Session(net, ctx(c), ctx(sv), ctx(LB_A), ctx(LB_B), ctx(CA), adv)


class _Prepared:
    """Per-config values that are the same in every trial."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.pattern = cfg.run_pattern()
        self.expected = deterministic_output(self.pattern)
        self.ideal_state = ideal_output_state(self.pattern) if cfg.quantum_output else None
        self.reg = RegistrationParams(
            Variant(cfg.protocol), m_payload=cfg.m, l=cfg.l, k=cfg.k, sample_fraction=cfg.sample_fraction,
            error_threshold=cfg.threshold(cfg.error_threshold), decoy_threshold=cfg.threshold(cfg.decoy_threshold),
            min_key_length=cfg.key_length(), max_rounds=cfg.max_rounds)


def _run_session(prep: _Prepared, s: Session) -> SessionReport:
    cfg = prep.cfg
    rep = SessionReport(str(s.client.party), str(s.server.party), "ok")
    reg = run_registration(prep.reg, s)
    if isinstance(reg, Abort):
        rep.registration, rep.rounds = reg.reason, reg.round
        rep.decoy_abort = reg.is_decoy
        rep.sample_rate = reg.sample_rate
        return rep
    rep.key_length, rep.rounds = len(reg.client_key), reg.rounds
    rep.kept_fraction, rep.sample_rate = reg.kept_fraction, reg.sample_rate

    if cfg.entangled_auth:
        verdict, _ = run_auth_entangled(s, reg.client_key, reg.server_key, cfg.auth_k, cfg.auth_decoys)
    else:
        cut = lambda key: RawKey(key.bits[: cfg.auth_key_length], key.owner)
        verdict, _ = run_auth_key_encoded(s, cut(reg.client_key), cut(reg.server_key),
                                          gate_only=cfg.protocol == "cb", decoys=cfg.auth_decoys)
    rep.auth, rep.auth_reason = verdict.mutual, verdict.reason
    if not verdict.mutual:
        return rep

    srv = s.adversary.server()
    if cfg.protocol == "ram":
        res = run_stabilizer_verified(StabilizerRunParams(prep.pattern.n, cfg.alpha, cfg.beta),
                                      prep.pattern.graph, prep.pattern, srv, s)
    elif cfg.protocol == "shan-baseline":
        res = run_receive_and_measure(prep.pattern, srv, s)
    else:
        kind = ClientKind.GATE_ONLY if cfg.protocol == "cb" else ClientKind.PREPARES_STATES
        res = run_trap_verified(prep.pattern, kind, srv, s, cfg.quantum_output, prep.ideal_state)
    rep.vbqc, rep.vbqc_reason, rep.output = res.accepted, res.reason, res.output
    if cfg.quantum_output and res.output_fidelity is not None:
        rep.incorrect = (1 - res.output_fidelity) if res.accepted else 0.0
    elif prep.expected is not None:
        rep.incorrect = float(res.accepted and tuple(res.output) != prep.expected)
    return rep


def run_trial(prep: _Prepared, trial: int, keep_log: bool = False) -> TrialReport:
    cfg = prep.cfg
    try:
        adv = adv_mod.AdversarySpec(cfg.adversary, dict(cfg.adversary_params)).build(
            stream(cfg.seed, trial, "adversary"))
        net = Network(noise=cfg.noise, noise_rng=stream(cfg.seed, trial, "channel"),
                      interceptors=adv.interceptors())
        contexts = {}

        def ctx(p):
            if p not in contexts:
                contexts[p] = PartyContext(p, stream(cfg.seed, trial, str(p)))
            return contexts[p]

        sessions = []
        for c, sv in fifo_dispatch(range(cfg.m_clients), cfg.n_servers):
            s = Session(net, ctx(c), ctx(sv), ctx(LB_A), ctx(LB_B), ctx(CA), adv)
            sessions.append(_run_session(prep, s))
        adv.finish(s)
    except Exception as exc:
        raise TrialFault(trial, exc) from exc
    return TrialReport(trial, sessions, net.log.to_jsonl() if keep_log else "")


def _run_chunk(args):
    cfg, trials, keep_log = args
    prep = _Prepared(cfg)
    return [run_trial(prep, t, keep_log) for t in trials]


def run_trials(cfg: ScenarioConfig, workers: int = 1, keep_log: bool = False) -> list[TrialReport]:
    bad = validate(cfg)
    if bad:
        raise ConfigError(bad)
    indices = list(range(cfg.trials))
    if workers <= 1:
        return _run_chunk((cfg, indices, keep_log))
    chunks = [indices[i::workers] for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, [(cfg, c, keep_log) for c in chunks if c]))
    return sorted((r for part in parts for r in part), key=lambda r: r.trial)


# -- aggregation -------------------------------------------------------------


@dataclass
class Metric:
    name: str
    mean: float
    stderr: float
    lo95: float
    hi95: float
    n: int
    reference: float | None = None
    tolerance: float | None = None
    comparator: str | None = None   # "approx", "le", "ge", "gt", "lt"
    passed: bool | None = None

    def to_dict(self) -> dict:
        d = {k: _round(v) for k, v in dataclasses.asdict(self).items()}
        d["pass"] = d.pop("passed")
        return d


def _round(x):
    if isinstance(x, float):
        return float(format(x, ".12g"))
    return x


def summarize(name: str, values, reference=None, tolerance=None, comparator=None) -> Metric:
    v = np.asarray([float(x) for x in values], dtype=float)
    n = len(v)
    mean = float(v.mean()) if n else 0.0
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    m = Metric(name, mean, se, mean - 1.96 * se, mean + 1.96 * se, n, reference, tolerance, comparator)
    if reference is not None and n:
        tol = tolerance or 0.0
        m.passed = {
            "approx": abs(mean - reference) <= tol,
            "le": mean <= reference + tol,
            "ge": mean >= reference - tol,
            "gt": mean > reference,
            "lt": mean < reference,
        }[comparator or "approx"]
    return m


@dataclass
class AggregateReport:
    config: dict
    metrics: list
    abort_codes: dict = field(default_factory=dict)
    trials: int = 0

    def metric(self, name: str) -> Metric:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "trials": self.trials,
            "abort_codes": dict(sorted(self.abort_codes.items())),
            "metrics": [m.to_dict() for m in self.metrics],
        }


def _references(cfg: ScenarioConfig, pattern: MeasurementPattern) -> dict:
    """(reference, tolerance, comparator) per metric, where the model predicts one."""
    refs = {}
    kind, params = cfg.adversary, cfg.adversary_params
    honest = kind == "none" and cfg.noise == 0
    if honest:
        for name in ("registration_success", "auth_mutual_accept", "vbqc_accept"):
            refs[name] = (1.0, 0.0, "approx")
        refs["kept_fraction"] = (1 / 8, 0.02, "approx")
    if kind in ("intercept_resend", "entangle_probe"):
        d = _decoys_on(cfg, params.get("channel", "client->lba"))
        if d and _one_round_suffices(cfg):
            refs["decoy_detect_rate"] = (1 - 0.75**d, 0.03, "approx")
    if kind == "random_bell_ca":
        refs["key_sample_mismatch"] = (0.5, 0.05, "approx")
    if kind == "dishonest_balancer":
        refs["registration_abort"] = (0.0, None, "gt")
    if kind == "random_key_impostor":
        if cfg.entangled_auth:
            refs["auth_mutual_accept"] = (0.05, 0.0, "lt")
        else:
            refs["auth_mutual_accept"] = (0.75 ** (cfg.auth_key_length // 2), 0.03, "le")
    if kind == "wrong_graph_server":
        if cfg.protocol == "ram" and params.get("replacement", "all") == "all":
            refs["vbqc_accept"] = (0.5**cfg.beta, 0.03, "approx")
        elif cfg.trap_based:
            refs["vbqc_accept"] = (0.5 ** len(pattern.vertices(QubitClass.TRAP)), 0.05, "approx")
    if kind == "trap_flip_server" and cfg.trap_based:
        p = float(params.get("p", 0.5))
        refs["vbqc_accept"] = ((1 - p) ** len(pattern.vertices(QubitClass.TRAP)), 0.05, "approx")
    if kind in ("wrong_graph_server", "trap_flip_server") and cfg.protocol != "shan-baseline" and pattern.n >= 2:
        out = OutputKind.QUANTUM if cfg.quantum_output else OutputKind.CLASSICAL
        refs["incorrect_and_accept"] = (verif_bound(pattern.n, out), 0.02, "le")
    return refs


def _one_round_suffices(cfg: ScenarioConfig) -> bool:
    """Whether a single registration round yields enough key, 2.5 sigma below the mean.

    Every extra round is a fresh set of decoys, so the single-crossing detection
    reference only applies when retries are rare.
    """
    needed = RegistrationParams(Variant(cfg.protocol), m_payload=cfg.m, sample_fraction=cfg.sample_fraction,
                                min_key_length=cfg.key_length()).raw_length_needed()
    mean, sd = cfg.m / 8, math.sqrt(cfg.m * 7 / 64)
    return mean - 2.5 * sd >= needed


def _decoys_on(cfg: ScenarioConfig, channel: str) -> int:
    """Registration decoys that cross ``channel`` before being checked."""
    table = {
        "ram": {"lba->client": cfg.l + cfg.k, "client->lba": cfg.k, "server->lbb": cfg.k},
        "pas": {"client->lba": cfg.k, "server->lbb": cfg.k},
        "cb": {"lba->client": cfg.k, "client->lba": cfg.k, "server->lbb": cfg.k},
        "shan-baseline": {"lba->client": cfg.k, "lbb->server": cfg.k},
    }
    return table.get(cfg.protocol, {}).get(channel, 0)


def aggregate(cfg: ScenarioConfig, reports: list[TrialReport]) -> AggregateReport:
    pattern = cfg.run_pattern()
    sessions = [s for r in reports for s in r.sessions]
    refs = _references(cfg, pattern)
    codes: dict[str, int] = {}
    for s in sessions:
        if s.registration != "ok":
            codes[s.registration] = codes.get(s.registration, 0) + 1
        if s.auth is False:
            key = f"auth: {s.auth_reason}"
            codes[key] = codes.get(key, 0) + 1
        if s.vbqc is False:
            key = f"vbqc: {s.vbqc_reason}"
            codes[key] = codes.get(key, 0) + 1
    series = {
        "registration_success": [s.registration == "ok" for s in sessions],
        "registration_abort": [s.registration != "ok" for s in sessions],
        "decoy_detect_rate": [s.decoy_abort for s in sessions],
        "kept_fraction": [s.kept_fraction for s in sessions if s.kept_fraction is not None],
        "key_sample_mismatch": [s.sample_rate for s in sessions if s.sample_rate is not None],
        "auth_mutual_accept": [s.auth for s in sessions if s.auth is not None],
        "vbqc_accept": [s.vbqc for s in sessions if s.vbqc is not None],
        "incorrect_and_accept": [s.incorrect for s in sessions if s.incorrect is not None],
        "end_to_end_success": [bool(s.vbqc) for s in sessions],
    }
    metrics = [summarize(name, vals, *refs.get(name, (None, None, None))) for name, vals in series.items() if vals]
    return AggregateReport(cfg.to_dict(), metrics, codes, len(reports))


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> AggregateReport:
    return aggregate(cfg, run_trials(cfg, workers))


# -- output ----------------------------------------------------------------


CSV_COLUMNS = ("metric", "mean", "stderr", "lo95", "hi95", "n", "reference", "pass")


def render(report: AggregateReport, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for m in report.metrics:
            d = m.to_dict()
            w.writerow([m.name] + ["" if d[c] is None else _cell(d[c]) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()
    raise ValueError(f"unknown format {fmt!r}")


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def emit(report: AggregateReport, fmt: str, path) -> Path:
    path = Path(path)
    text = render(report, fmt)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def channel_log(reports: list[TrialReport]) -> str:
    """All trials' channel events as JSONL, each tagged with its trial index."""
    lines = []
    for r in reports:
        for line in r.log.splitlines():
            lines.append(json.dumps({"trial": r.trial, **json.loads(line)}, sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)


def suite_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def suite_configs() -> list[ScenarioConfig]:
    return [load_config(p) for p in sorted(suite_dir().glob("*.toml"))]
