"""Command line: `hevx keygen|send|recv|bench|report`.

Every flag can also come from an environment variable named HEVX_<FLAG>
(e.g. HEVX_SCHEME=bgv-add, HEVX_PACE_MS=1).  Flags win over the environment,
which wins over the built-in defaults.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from . import __version__
from .metrics import RunLabel, emit_csv, format_summary, linearity_check, read_csv, summarize
from .params import PRESET_IDS, ParamError, Scheme, check, get_preset
from .rsu import LISTEN_TIMEOUT, receiver_session
from .scenarios import (
    ScenarioConfig,
    ScenarioError,
    ScenarioKind,
    ScenarioResult,
    completed_metrics,
    receiver_job,
    run_trials,
    sender_session,
)
from .metrics import TrialMetrics
from .schemes import keygen
from .transport import (
    DEFAULT_PORT,
    ETHERNET_PACE,
    WIFI_RTT_MULTIPLIER,
    AdaptiveRttPacing,
    ChannelConfig,
    ChannelMode,
    FixedPacing,
    PacingPolicy,
    TransportError,
    UdpEndpoint,
)
from .wire import WireFormatError, serialize

log = logging.getLogger("hevx")

ENV_PREFIX = "HEVX_"
SUBCOMMANDS = ("keygen", "send", "recv", "bench", "report")


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    scheme: str = "bfv-add"
    scenario: str = "count"
    vehicles: int = 50
    trials: int = 20
    port: int | None = None
    peer: str | None = None
    channel: str = "loopback"
    mtu: int = 1400
    profile: str = "ethernet"
    pace_ms: float | None = None
    rtt_multiplier: float = WIFI_RTT_MULTIPLIER
    timeout_ms: float = 5000.0
    listen_timeout_s: float = LISTEN_TIMEOUT
    sim_latency_ms: float = 0.0
    sim_jitter_ms: float = 0.0
    sim_loss: float = 0.0
    sim_dup: float = 0.0
    presence: float = 1.0
    seed: int = 0
    output: str | None = None
    insecure_ok: bool = False
    force_scenario: bool = False
    files: tuple[str, ...] = ()

    @property
    def medium_profile(self) -> str:
        if self.pace_ms is not None:
            return f"fixed-{self.pace_ms:g}ms"
        return self.profile

    def pacing(self) -> PacingPolicy:
        if self.pace_ms is not None:
            return FixedPacing(self.pace_ms / 1e3)
        if self.profile == "wifi":
            return AdaptiveRttPacing(self.rtt_multiplier)
        return FixedPacing(ETHERNET_PACE)

    def channel_config(self) -> ChannelConfig:
        sim = self.channel == "sim"
        return ChannelConfig(
            mode=ChannelMode.SIMULATED if sim else ChannelMode.SOCKET,
            mtu=self.mtu,
            pace=(self.pace_ms / 1e3) if self.pace_ms is not None else ETHERNET_PACE,
            recv_timeout=self.timeout_ms / 1e3,
            one_way_latency=self.sim_latency_ms / 1e3,
            jitter_stddev=self.sim_jitter_ms / 1e3,
            loss_probability=self.sim_loss,
            duplicate_probability=self.sim_dup,
            seed=self.seed if sim else None,
        )

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(
            scenario=ScenarioKind(self.scenario),
            preset_id=self.scheme,
            vehicle_count=self.vehicles,
            trials=self.trials,
            presence_probability=self.presence,
            seed=self.seed,
            allow_insecure=self.insecure_ok,
        )


def _env(name: str, default=None):
    return os.environ.get(ENV_PREFIX + name.upper(), default)


def _flag(parser: argparse.ArgumentParser, *names, type=str, default=None, **kw):
    dest = kw.pop("dest", names[0].lstrip("-").replace("-", "_"))
    env = _env(dest)
    if env is not None:
        default = type(env)
    parser.add_argument(*names, dest=dest, type=type, default=default, **kw)


def _bool_env(name: str) -> bool:
    return str(_env(name, "")).lower() in ("1", "true", "yes", "on")


def _add_common(p: argparse.ArgumentParser, role: str) -> None:
    _flag(p, "--scheme", default="bfv-add", choices=PRESET_IDS, help="parameter preset")
    _flag(p, "--seed", type=int, default=0)
    p.add_argument("--insecure-ok", action="store_true", default=_bool_env("insecure_ok"),
                   help="allow the small toy presets")
    p.add_argument("-v", "--verbose", action="store_true")
    if role == "keygen":
        _flag(p, "--output", help="directory for public-key.bin / eval-key.bin")
        return
    _flag(p, "--scenario", default=None, choices=[k.value for k in ScenarioKind],
          help="count (default) or avg (default for ckks-mul)")
    _flag(p, "--vehicles", type=int, default=50)
    _flag(p, "--trials", type=int, default=None, help="default 20 for BFV/BGV, 5 for CKKS")
    _flag(p, "--presence", type=float, default=1.0, help="probability a simulated vehicle is present")
    _flag(p, "--port", type=int, default=None, help=f"UDP port (default {DEFAULT_PORT})")
    _flag(p, "--mtu", type=int, default=1400)
    _flag(p, "--profile", default="ethernet", choices=("ethernet", "wifi"),
          help="ethernet: fixed 100 ms pacing; wifi: 1.2 x probe RTT")
    _flag(p, "--pace-ms", type=float, default=None, help="fixed pacing, overrides --profile")
    _flag(p, "--rtt-multiplier", type=float, default=WIFI_RTT_MULTIPLIER)
    _flag(p, "--timeout-ms", type=float, default=5000.0, help="receive timeout between fragments")
    _flag(p, "--listen-timeout-s", type=float, default=LISTEN_TIMEOUT,
          help="how long to wait for a trial to start or a result to come back")
    _flag(p, "--output", help="CSV path")
    p.add_argument("--force-scenario", action="store_true",
                   help="allow the count scenario on the multiplication preset")
    if role == "send":
        _flag(p, "--peer", default="127.0.0.1", help="receiver host[:port]")
    if role == "bench":
        _flag(p, "--channel", default="loopback", choices=("loopback", "sim"))
        _flag(p, "--sim-latency-ms", type=float, default=0.0)
        _flag(p, "--sim-jitter-ms", type=float, default=0.0)
        _flag(p, "--sim-loss", type=float, default=0.0)
        _flag(p, "--sim-dup", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hevx", description="Homomorphic V2X aggregation benchmark")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    _add_common(sub.add_parser("keygen", help="generate keys and report their sizes"), "keygen")
    _add_common(sub.add_parser("send", help="run the vehicle (sender) role"), "send")
    _add_common(sub.add_parser("recv", help="run the RSU (receiver) role"), "recv")
    _add_common(sub.add_parser("bench", help="run both roles locally and write a CSV"), "bench")
    rep = sub.add_parser("report", help="summarize CSVs; with several N, check linear scaling")
    rep.add_argument("files", nargs="+")
    rep.add_argument("-v", "--verbose", action="store_true")
    return parser


def parse_args(argv: list[str] | None = None) -> CliConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.subcommand == "report":
        return CliConfig(subcommand="report", files=tuple(ns.files))
    values = {k: v for k, v in vars(ns).items() if k in CliConfig.__dataclass_fields__ and v is not None}
    ps = get_preset(ns.scheme)
    if ns.subcommand != "keygen":
        if ns.scenario is None:
            values["scenario"] = "avg" if ps.levels == 2 else "count"
        if ns.trials is None:
            values["trials"] = 5 if ps.scheme is Scheme.CKKS else 20
    cfg = CliConfig(**values)

    if not ps.secure and not cfg.insecure_ok:
        parser.error(f"--scheme {cfg.scheme} is below 128-bit security; pass --insecure-ok to use it")
    if cfg.subcommand == "keygen":
        return cfg
    if cfg.scenario == "avg" and not (ps.scheme is Scheme.CKKS and ps.levels == 2):
        parser.error(f"--scenario avg needs a multiplicative CKKS preset, not --scheme {cfg.scheme}")
    if cfg.scenario == "count" and ps.levels == 2 and not cfg.force_scenario:
        parser.error(f"--scheme {cfg.scheme} is the averaging preset; use --scenario avg "
                     "or add --force-scenario")
    if cfg.vehicles < 2:
        parser.error("--vehicles must be at least 2")
    if ps.scheme is not Scheme.CKKS and cfg.vehicles >= ps.plaintext_modulus_t:
        parser.error(f"--vehicles {cfg.vehicles} does not fit plaintext modulus t={ps.plaintext_modulus_t}")
    if cfg.trials < 1:
        parser.error("--trials must be at least 1")
    if not 64 <= cfg.mtu <= 65507:
        parser.error("--mtu must lie in [64, 65507]")
    if cfg.timeout_ms <= 0:
        parser.error("--timeout-ms must be positive")
    if cfg.pace_ms is not None and cfg.pace_ms < 0:
        parser.error("--pace-ms must be non-negative")
    if cfg.rtt_multiplier < 1:
        parser.error("--rtt-multiplier must be at least 1")
    for name in ("sim_loss", "sim_dup", "presence"):
        if not 0.0 <= getattr(cfg, name) <= 1.0:
            parser.error(f"--{name.replace('_', '-')} must lie in [0, 1]")
    return cfg


# --- subcommands ----------------------------------------------------------

def _label(cfg: CliConfig) -> RunLabel:
    return RunLabel(cfg.scheme, cfg.scenario, cfg.vehicles, cfg.medium_profile)


def _default_output(cfg: CliConfig) -> str:
    return f"hevx_{cfg.subcommand}_{cfg.scheme}_{cfg.scenario}_{cfg.vehicles}.csv"


def _write_results(cfg: CliConfig, results: list[ScenarioResult], extra: dict | None = None) -> int:
    done = completed_metrics(results)
    failures = [r for r in results if not r.verified]
    path = cfg.output or _default_output(cfg)
    meta = {
        "config": {k: v for k, v in asdict(cfg).items() if k != "files"},
        "params": str(get_preset(cfg.scheme)),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "verified": sum(r.verified for r in results),
        "failures": [{"trial": r.trial, "error": r.error} for r in failures],
        "decrypted": [r.decrypted_value for r in results],
        "ground_truth": [r.ground_truth for r in results],
        **(extra or {}),
    }
    if done:
        summary = summarize(done)
        emit_csv(summary, done, path, _label(cfg), meta)
        print(format_summary(summary, _label(cfg)))
        print(f"wrote {path}")
    print(f"{len(results) - len(failures)}/{len(results)} trials verified")
    if failures:
        print(f"first failure (trial {failures[0].trial}): {failures[0].error}", file=sys.stderr)
        return 1
    return 0


def _progress(cfg: CliConfig):
    def report(r: ScenarioResult) -> None:
        status = "ok" if r.verified else f"FAILED: {r.error}"
        rtt = f", rtt {r.metrics.rtt_ms:.1f} ms" if r.metrics else ""
        log.info("trial %d/%d: %s -> %s (expected %s)%s", r.trial + 1, cfg.trials, status,
                 r.decrypted_value, r.ground_truth, rtt)
    return report


def run_bench(cfg: CliConfig) -> int:
    scenario = cfg.scenario_config()
    channel = cfg.channel_config()
    results = run_trials(scenario, channel, cfg.pacing(), port=cfg.port or 0,
                         progress=_progress(cfg))
    return _write_results(cfg, results, {"channel": asdict(channel)})


def _peer(cfg: CliConfig) -> tuple[str, int]:
    host, _, port = (cfg.peer or "127.0.0.1").partition(":")
    return host, int(port) if port else (cfg.port or DEFAULT_PORT)


def run_send(cfg: CliConfig) -> int:
    scenario = cfg.scenario_config()
    endpoint = UdpEndpoint(cfg.channel_config(), bind=("0.0.0.0", 0), peer=_peer(cfg))
    results = []
    progress = _progress(cfg)
    try:
        for trial in range(cfg.trials):
            try:
                r = sender_session(scenario, endpoint, cfg.pacing(), trial,
                                   compute_timeout=cfg.listen_timeout_s)
            except (TransportError, ScenarioError, WireFormatError) as exc:
                r = ScenarioResult(trial, None, 0, None, False, error=f"{type(exc).__name__}: {exc}")
            results.append(r)
            progress(r)
    finally:
        endpoint.close()
    return _write_results(cfg, results, {"granted_rcvbuf": endpoint.granted_rcvbuf})


def run_recv(cfg: CliConfig) -> int:
    scenario = cfg.scenario_config()
    endpoint = UdpEndpoint(cfg.channel_config(), bind=("0.0.0.0", cfg.port or DEFAULT_PORT))
    failures = 0
    try:
        for trial in range(cfg.trials):
            try:
                rep = receiver_session(endpoint, receiver_job(scenario, trial), cfg.pacing(),
                                       listen_timeout=cfg.listen_timeout_s,
                                       compute_timeout=cfg.listen_timeout_s)
                log.info("trial %d: %d additions, %d multiplications, %.1f ms",
                         trial + 1, rep.add_count, rep.mul_count, rep.hom_op_ms)
            except (TransportError, WireFormatError, RuntimeError) as exc:
                failures += 1
                print(f"trial {trial + 1} failed: {exc}", file=sys.stderr)
    finally:
        endpoint.close()
    return 1 if failures else 0


def run_keygen(cfg: CliConfig) -> int:
    ps = check(get_preset(cfg.scheme))
    t0 = time.perf_counter()
    keys = keygen(ps, cfg.seed, allow_insecure=cfg.insecure_ok)
    elapsed = (time.perf_counter() - t0) * 1e3
    print(ps)
    print(f"keygen: {elapsed:.1f} ms")
    blobs = {"public-key.bin": serialize(keys.public)}
    if keys.evaluation is not None:
        blobs["eval-key.bin"] = serialize(keys.evaluation)
    for name, blob in blobs.items():
        print(f"{name}: {len(blob)} bytes")
        if cfg.output:
            out = Path(cfg.output)
            out.mkdir(parents=True, exist_ok=True)
            (out / name).write_bytes(blob.body)
    return 0


def _trial_from_row(row: dict[str, str]) -> TrialMetrics:
    return TrialMetrics(
        encrypt_ms=float(row["encrypt_ms"]), hom_op_ms=float(row["hom_op_ms"]),
        decrypt_ms=float(row["decrypt_ms"]), rtt_ms=float(row["rtt_ms"]),
        frag_ms=float(row["frag_ms"]), reasm_ms=float(row["reasm_ms"]),
        fragments_total=int(row["fragments_total"]), bytes_sent=int(row["bytes_sent"]),
        bytes_received=int(row["bytes_received"]), trial=int(row["trials"]),
    )


def run_report(cfg: CliConfig) -> int:
    runs = []
    for f in cfg.files:
        parsed = read_csv(f)
        s = parsed.summary_row
        label = RunLabel(s["scheme"], s["scenario"], int(s["vehicles"]), s["medium_profile"])
        summary = summarize([_trial_from_row(r) for r in parsed.trial_rows])
        print(format_summary(summary, label))
        print()
        runs.append((label, summary))
    if len(runs) >= 2:
        lin = linearity_check(runs)
        pts = ", ".join(f"N={n}: {v:.1f} ms" for n, v in lin.points)
        print(f"homomorphic time vs vehicles: {pts}")
        print(f"ratio largest/smallest N = {lin.ratio:.2f}, linear fit R^2 = {lin.r_squared:.4f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = parse_args(argv)
    except (ParamError, ScenarioError) as exc:
        print(f"hevx: error: {exc}", file=sys.stderr)
        return 2
    verbose = "-v" in (argv or sys.argv[1:]) or "--verbose" in (argv or sys.argv[1:])
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    handlers = {"keygen": run_keygen, "send": run_send, "recv": run_recv,
                "bench": run_bench, "report": run_report}
    try:
        return handlers[cfg.subcommand](cfg)
    except (ParamError, ScenarioError, WireFormatError, OSError) as exc:
        print(f"hevx: error: {exc}", file=sys.stderr)
        return 1
