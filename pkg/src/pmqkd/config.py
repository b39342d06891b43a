"""Command-line and config-file parsing into a validated :class:`RunConfig`.

Config files are flat ``key = value`` lines grouped under ``[section]``
headers.  ``[common]`` holds options shared by every command; the other
sections are named after commands (``[rates]``, ``[attack-sweep]`` ...).
``#`` and ``;`` start comment lines.  Keys use the long flag names with
dashes or underscores.  Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import rates
from .circuit import CircuitParams
from .errors import DomainError, PMQKDError
from .protocol import ADVERSARIES, ProtocolParams

COMMANDS = ("verify", "rates", "simulate", "attack-sweep")
ENV_OUTPUT_DIR = "PMQKD_OUTPUT_DIR"


class ConfigError(PMQKDError):
    """Invalid command line or config file; maps to exit code 2."""


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive), ``x,y,z`` or a single number."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError
            return rates.inclusive_range(*parts)
        return [float(p) for p in text.split(",") if p.strip()]
    except (ValueError, DomainError):
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}; expected START:STOP:STEP, a list or a number")


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"invalid boolean {text!r}")


@dataclass(frozen=True)
class Option:
    name: str  # flag name without leading dashes
    type: Callable[[str], Any]
    help: str
    flag: bool = False  # store_true on the command line

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


COMMON = (
    Option("output-dir", str, f"output directory (default ${ENV_OUTPUT_DIR} or .)"),
    Option("precision", int, "significant digits in CSV output (default 12)"),
    Option("svg", _bool, "also write SVG charts", flag=True),
)

_INTENSITY = (
    Option("mu", float, "intensity for both senders"),
    Option("mu-a", float, "Alice's intensity"),
    Option("mu-b", float, "Bob's intensity"),
)
_GRID = (
    Option("mu", parse_grid, "intensity grid, START:STOP:STEP or list"),
    Option("eta", parse_grid, "per-arm transmittance grid"),
    Option("eta-db", parse_grid, "per-arm loss grid in dB"),
    Option("f", float, "error-correction efficiency (default 1.0)"),
    Option("e-bit", float, "bit error rate used in the key rate (default 0)"),
    Option("fig4a", _bool, "preset: mu 0.005..0.5 step 0.005 at eta = 0.01", flag=True),
    Option("fig4b", _bool, "preset: 0..50 dB step 0.5 at mu = 0.05", flag=True),
)
_MC = (
    Option("d", int, "number of phase slices (even, default 16)"),
    Option("dark-count", float, "dark count probability per detector per round"),
    Option("misalignment", float, "probability that Charlie's L/R label is flipped"),
    Option("rounds", int, "number of rounds"),
    Option("seed", int, "master seed"),
    Option("workers", int, "worker threads (results do not depend on it)"),
)

OPTIONS: dict[str, tuple[Option, ...]] = {
    "verify": _INTENSITY + (
        Option("d", int, "number of phase slices (default 16)"),
        Option("cutoff", int, "photon-number cutoff per mode (default 12)"),
        Option("eta", float, "per-arm transmittance for the parity/rate cross-check (default 0.01)"),
    ),
    "rates": _GRID + (Option("clamp-rates", _bool, "clamp negative key rates to 0 in the CSV", flag=True),),
    "simulate": _INTENSITY + (
        Option("eta", float, "per-arm transmittance (default 0.1)"),
        Option("eta-db", float, "per-arm loss in dB"),
        Option("f", float, "error-correction efficiency"),
        Option("adversary", str, "none or beamsplit"),
        Option("log", _bool, "write the per-round log rounds.csv", flag=True),
    ) + _MC,
    "attack-sweep": _GRID[:3] + _MC,
}


@dataclass
class RunConfig:
    command: str
    params: dict
    output_dir: Path
    emit_svg: bool = False
    csv_precision: int = 12
    circuit: Optional[CircuitParams] = None
    points: list = field(default_factory=list)
    preset: Optional[str] = None
    protocol: Optional[ProtocolParams] = None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmqkd",
        description="Phase-matching QKD laboratory: circuit checks, rate bounds and Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}")
    sub.required = True
    for cmd in COMMANDS:
        p = sub.add_parser(cmd, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        for opt in COMMON + OPTIONS[cmd]:
            if opt.flag:
                p.add_argument(f"--{opt.name}", dest=opt.dest, action="store_true", help=opt.help)
            else:
                p.add_argument(f"--{opt.name}", dest=opt.dest, type=opt.type, help=opt.help)
    return parser


def read_config_file(path: str | Path, command: str) -> dict[str, Any]:
    """Values from ``[common]`` and ``[command]``; raises ConfigError with line:col."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file: {exc.strerror}")
    known = {
        sec: {o.dest: o for o in (COMMON if sec == "common" else OPTIONS[sec])}
        for sec in ("common",) + COMMANDS
    }
    section = None
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(lines, 1):
        stripped = raw.strip()
        col = len(raw) - len(raw.lstrip()) + 1
        if not stripped or stripped[0] in "#;":
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigError(f"{path}:{lineno}:{col}: malformed section header")
            section = stripped[1:-1].strip()
            if section not in known:
                raise ConfigError(f"{path}:{lineno}:{col + 1}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}:{col}: expected key = value")
        if section is None:
            raise ConfigError(f"{path}:{lineno}:{col}: key outside of any section")
        key, _, value = stripped.partition("=")
        dest = key.strip().replace("-", "_")
        opt = known[section].get(dest)
        if opt is None:
            raise ConfigError(f"{path}:{lineno}:{col}: unknown key {key.strip()!r} in [{section}]")
        if section not in ("common", command):
            continue
        after = raw[raw.index("=") + 1:]
        vcol = len(raw) - len(after.lstrip()) + 1
        try:
            values[dest] = (_bool if opt.flag else opt.type)(value.strip())
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}:{lineno}:{vcol}: bad value for {key.strip()!r}: {exc}")
    return values


def _pick(v: dict, name: str, default):
    return v[name] if v.get(name) is not None else default


def _intensities(v: dict, default: float) -> tuple[float, float]:
    mu = _pick(v, "mu", default)
    return _pick(v, "mu_a", mu), _pick(v, "mu_b", mu)


def _single(values: Sequence[float], name: str) -> float:
    if len(values) != 1:
        raise ConfigError(f"--{name} must be a single value here")
    return values[0]


def _grid_points(v: dict, f: float, e_bit: float, *, allow_presets: bool) -> tuple[list, Optional[str]]:
    if v.get("eta") is not None and v.get("eta_db") is not None:
        raise ConfigError("--eta and --eta-db are mutually exclusive")
    presets = [p for p in ("fig4a", "fig4b") if v.get(p)] if allow_presets else []
    if len(presets) > 1:
        raise ConfigError("--fig4a and --fig4b are mutually exclusive")
    if presets:
        if any(v.get(k) is not None for k in ("mu", "eta", "eta_db")):
            raise ConfigError(f"--{presets[0]} fixes the grid; drop --mu/--eta/--eta-db")
        pts = rates.fig4a_points(f, e_bit) if presets[0] == "fig4a" else rates.fig4b_points(f, e_bit)
        return pts, presets[0]
    mus = v["mu"] if v.get("mu") is not None else [0.05]
    if v.get("eta_db") is not None:
        etas, use_db = v["eta_db"], True
    else:
        etas, use_db = (v["eta"] if v.get("eta") is not None else [0.01]), False
    if not mus or not etas:
        raise ConfigError("sweep grid is empty")
    if len(mus) > 1 and len(etas) > 1:
        raise ConfigError("sweep one of --mu or --eta/--eta-db at a time")
    pts = []
    for m in mus:
        for e in etas:
            pts.append(rates.ChannelPoint.from_db(m, e, f, e_bit) if use_db
                       else rates.ChannelPoint.from_eta(m, e, f, e_bit))
    return pts, None


def _output_dir(v: dict) -> Path:
    out = Path(_pick(v, "output_dir", os.environ.get(ENV_OUTPUT_DIR) or "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc.strerror}")
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def parse_config(argv: Sequence[str] | None = None) -> RunConfig:
    """Parse flags (and ``--config``) into a validated RunConfig.

    argparse-level errors exit with status 2 themselves; everything else
    raises ConfigError.
    """
    ns = build_parser().parse_args(argv)
    command = ns.command
    flags = {k: val for k, val in vars(ns).items() if k not in ("command", "config")}
    v: dict[str, Any] = {}
    if getattr(ns, "config", None):
        v.update(read_config_file(ns.config, command))
    v.update(flags)

    precision = _pick(v, "precision", 12)
    if not 1 <= precision <= 17:
        raise ConfigError(f"--precision must be in 1..17, got {precision}")
    cfg = RunConfig(
        command=command,
        params=dict(v),
        output_dir=_output_dir(v),
        emit_svg=bool(v.get("svg", False)),
        csv_precision=precision,
    )
    try:
        if command == "verify":
            mu_a, mu_b = _intensities(v, 0.05)
            eta = _pick(v, "eta", 0.01)
            if not 0 < eta <= 1:
                raise DomainError(f"transmittance must lie in (0, 1], got {eta}")
            cfg.circuit = CircuitParams(mu_a, mu_b, _pick(v, "d", 16), _pick(v, "cutoff", 12))
        elif command == "rates":
            cfg.points, cfg.preset = _grid_points(
                v, _pick(v, "f", 1.0), _pick(v, "e_bit", 0.0), allow_presets=True
            )
        elif command == "simulate":
            mu_a, mu_b = _intensities(v, 0.05)
            if v.get("eta") is not None and v.get("eta_db") is not None:
                raise ConfigError("--eta and --eta-db are mutually exclusive")
            eta = rates.eta_from_db(v["eta_db"]) if v.get("eta_db") is not None else _pick(v, "eta", 0.1)
            adversary = _pick(v, "adversary", "none")
            if adversary not in ADVERSARIES:
                raise ConfigError(f"--adversary must be one of {', '.join(ADVERSARIES)}")
            cfg.protocol = ProtocolParams(
                mu_a=mu_a, mu_b=mu_b, eta=eta,
                d=_pick(v, "d", 16),
                dark_count=_pick(v, "dark_count", 0.0),
                misalignment=_pick(v, "misalignment", 0.0),
                f=_pick(v, "f", 1.0),
                rounds=_pick(v, "rounds", 1_000_000),
                seed=_pick(v, "seed", 0),
            )
            _check_workers(v)
        elif command == "attack-sweep":
            if v.get("mu") is None and v.get("eta") is None and v.get("eta_db") is None:
                v["eta_db"] = rates.inclusive_range(0.0, 50.0, 5.0)
            cfg.points, _ = _grid_points(v, 1.0, 0.0, allow_presets=False)
            cfg.protocol = ProtocolParams(
                mu_a=cfg.points[0].mu, mu_b=cfg.points[0].mu, eta=cfg.points[0].eta,
                d=_pick(v, "d", 16),
                dark_count=_pick(v, "dark_count", 0.0),
                misalignment=_pick(v, "misalignment", 0.0),
                rounds=_pick(v, "rounds", 100_000),
                seed=_pick(v, "seed", 0),
            )
            _check_workers(v)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _check_workers(v):
    if _pick(v, "workers", 1) < 1:
        raise ConfigError("--workers must be >= 1")
