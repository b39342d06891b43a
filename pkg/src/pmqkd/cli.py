"""``pmqkd`` command-line entry point.

Exit codes: 0 success, 1 a verify check failed, 2 configuration error.
"""

from __future__ import annotations

import io
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import circuit, fock, output, protocol, rates
from .config import ConfigError, RunConfig, parse_config
from .errors import PMQKDError


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3e} (tolerance {self.tolerance:.0e})"


class _Outputs:
    """Tracks files written by a command so a failed run leaves nothing behind."""

    def __init__(self, root: Path):
        self.root = root
        self.written: list[Path] = []

    def write(self, name: str, text: str) -> Path:
        path = self.root / name
        tmp = path.with_name(path.name + ".part")
        tmp.write_text(text, encoding="utf-8", newline="")
        self.written.append(path)
        tmp.replace(path)
        return path

    def open(self, name: str):
        path = self.root / name
        self.written.append(path)
        return path.open("w", encoding="utf-8", newline="")

    def discard(self) -> None:
        for p in self.written:
            p.unlink(missing_ok=True)
            p.with_name(p.name + ".part").unlink(missing_ok=True)


def _csv(write, *args, **kw) -> str:
    buf = io.StringIO()
    write(*args, buf, **kw)
    return buf.getvalue()


# --- commands ------------------------------------------------------------------


def verify_checks(params: circuit.CircuitParams, eta: float = 0.01) -> tuple[list[Check], circuit.ParityTable]:
    checks = []
    table = circuit.parity_table(params)
    dev = table.max_parity_deviation()
    checks.append(Check("max |p_xx_disagree - parity(N)|", dev, 1e-9, dev <= 1e-9))
    checks.append(Check("max weight with N != k mod d", table.off_support_weight, 1e-20,
                        table.off_support_weight < 1e-20))
    total_dev = abs(table.total_weight + table.dropped_weight - 1.0)
    checks.append(Check("|sum of branch weights - 1|", total_dev, 1e-9, total_dev <= 1e-9))

    yields = {n: rates.yield_k(n, eta) for n in table.weight_by_total()}
    from_parity = circuit.phase_error_rate_from_parity(table, yields)
    if params.mu_a == params.mu_b and params.mu_a > 0:
        diff = abs(from_parity - rates.phase_error_upper(params.mu_a, eta))
        checks.append(Check(f"parity e_p vs closed-form upper bound (eta={eta:g})", diff, 1e-9, diff <= 1e-9))

    worst_pf, worst_k = 0.0, 0.0
    for mu in {params.mu_a, params.mu_b}:
        cutoff = max(params.cutoff, params.d - 1)
        for k in range(params.d):
            r = circuit.verify_observation1(math.sqrt(mu), params.d, k, cutoff)
            if r.probability < circuit.RESOLVABLE:
                continue
            worst_pf = max(worst_pf, abs(1.0 - r.fidelity_pseudo_fock))
            worst_k = max(worst_k, 1.0 - r.fidelity_fock)
    checks.append(Check("max |1 - F(conditional, pseudo-Fock)|", worst_pf, 1e-12, worst_pf <= 1e-12))
    if params.d >= 16 and max(params.mu_a, params.mu_b) <= 0.05:
        checks.append(Check("max 1 - F(conditional, Fock |k>)", worst_k, 1e-10, worst_k <= 1e-10))

    tv = circuit.z_before_virtual_distance(params)
    checks.append(Check("TV distance, phases read before vs after encoding", tv, 1e-10, tv <= 1e-10))
    return checks, table


def usd_oracle_gap(mu: float, eta: float, cutoff: int = 12) -> float:
    """|closed-form p_usd - (1 - |<phi0|phi1>|)| with the overlap built in Fock space."""
    amp = math.sqrt((1 - eta) * mu)
    phi0 = fock.tensor([fock.coherent_state(amp, cutoff)] * 2)
    phi1 = fock.tensor([fock.coherent_state(-amp, cutoff)] * 2)
    return abs(rates.usd_probability(mu, eta) - (1 - abs(fock.inner_product(phi0, phi1))))


def _run_verify(cfg: RunConfig, out: _Outputs) -> int:
    eta = cfg.params.get("eta") or 0.01
    checks, table = verify_checks(cfg.circuit, eta)
    mu = 0.5 * (cfg.circuit.mu_a + cfg.circuit.mu_b)
    gap = usd_oracle_gap(mu, eta)
    checks.append(Check("p_usd formula vs Fock overlap", gap, 1e-9, gap <= 1e-9))
    out.write("parity.csv", _csv(output.write_parity_csv, table, precision=cfg.csv_precision))
    p = cfg.circuit
    lines = [f"verify: mu_a={p.mu_a:g} mu_b={p.mu_b:g} d={p.d} cutoff={p.cutoff} rows={len(table.rows)}"]
    lines += [c.line() for c in checks]
    ok = all(c.passed for c in checks)
    lines.append("all checks passed" if ok else "CHECK FAILURE")
    report = "\n".join(lines) + "\n"
    out.write("verify_report.txt", report)
    print(report, end="")
    return 0 if ok else 1


def _report_errors(errors) -> None:
    for i, exc in errors:
        print(f"pmqkd: warning: grid point {i} skipped: {exc}", file=sys.stderr)


def _run_rates(cfg: RunConfig, out: _Outputs) -> int:
    rows, errors = rates.sweep(cfg.points)
    _report_errors(errors)
    clamp = bool(cfg.params.get("clamp_rates"))
    out.write("sweep.csv", _csv(output.write_sweep_csv, rows, precision=cfg.csv_precision, clamp_rates=clamp))
    if cfg.emit_svg:
        mu_sweep = len({r.point.mu for r in rows}) > 1
        axes = output.MU_AXES if mu_sweep else output.DB_AXES
        name = {"fig4a": "figure4a.svg", "fig4b": "figure4b.svg"}.get(cfg.preset, "sweep.svg")
        out.write(name, output.emit_svg(rows, axes))
    print(f"wrote {len(rows)} rows to {cfg.output_dir / 'sweep.csv'}")
    return 0


def _run_simulate(cfg: RunConfig, out: _Outputs) -> int:
    p = cfg.protocol
    keep_log = bool(cfg.params.get("log"))
    adversary = cfg.params.get("adversary") or "none"
    stats, log = protocol.run_rounds(p, adversary, keep_log=keep_log, workers=cfg.params.get("workers") or 1)
    text = stats.as_text()
    if p.mu_a == p.mu_b:
        for key, val in protocol.analytic_expectations(p).items():
            text += f"expected_{key} = {val!r}\n"
    if adversary == "beamsplit":
        text += f"ep_lower_estimate = {protocol.estimate_attack_phase_error(stats)!r}\n"
    out.write("sim_stats.txt", text)
    if keep_log:
        with out.open("rounds.csv") as fh:
            protocol.write_round_log(log, fh)
    print(text, end="")
    return 0


ATTACK_COLUMNS = (
    "mu", "eta_db", "eta", "rounds", "sifted", "gain_hat", "gain", "qber_hat",
    "usd_success_fraction", "p_usd", "ep_lower_hat", "ep_lower", "ep_upper",
)


def _point_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=(2, index))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_attack_sweep(cfg: RunConfig, out: _Outputs) -> int:
    base = cfg.protocol
    workers = cfg.params.get("workers") or 1
    records = []
    for i, pt in enumerate(cfg.points):
        params = replace(base, mu_a=pt.mu, mu_b=pt.mu, eta=pt.eta, seed=_point_seed(base.seed, i))
        stats, _ = protocol.run_rounds(params, "beamsplit", workers=workers)
        records.append({
            "mu": pt.mu, "eta_db": pt.eta_db, "eta": pt.eta,
            "rounds": stats.rounds, "sifted": stats.sifted,
            "gain_hat": stats.gain_hat, "gain": rates.gain(pt.mu, pt.eta),
            "qber_hat": stats.qber_hat,
            "usd_success_fraction": stats.usd_success_fraction,
            "p_usd": rates.usd_probability(pt.mu, pt.eta),
            "ep_lower_hat": protocol.estimate_attack_phase_error(stats),
            "ep_lower": rates.phase_error_lower(pt.mu, pt.eta),
            "ep_upper": rates.phase_error_upper(pt.mu, pt.eta) if pt.mu > 0 else float("nan"),
        })
    out.write("attack_sweep.csv", _csv(output.write_table_csv, ATTACK_COLUMNS, records, precision=cfg.csv_precision))
    print(f"wrote {len(records)} rows to {cfg.output_dir / 'attack_sweep.csv'}")
    return 0


_COMMANDS = {
    "verify": _run_verify,
    "rates": _run_rates,
    "simulate": _run_simulate,
    "attack-sweep": _run_attack_sweep,
}


def run(cfg: RunConfig) -> int:
    out = _Outputs(cfg.output_dir)
    try:
        code = _COMMANDS[cfg.command](cfg, out)
    except BaseException:
        out.discard()
        raise
    return code


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:  # argparse: usage errors and --help
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"pmqkd: error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except PMQKDError as exc:
        print(f"pmqkd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
