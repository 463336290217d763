"""Command-line experiment runner.

Every subcommand resolves its parameters from built-in defaults, then an
optional JSON ``--config`` file, then explicit flags, and writes CSV whose
leading ``#`` lines record the resolved configuration and the VM version.
Outputs depend only on those, so reruns are byte-identical.

Exit codes: 0 success, 1 configuration error, 2 internal invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

from . import bell, corpus
from .bitstream import CoinSource, RawStream, SequenceSource
from .distinguisher import (
    X,
    Z,
    DistinguishConfig,
    error_bound,
    monte_carlo,
    noise_threshold,
    noisy_decay_rate,
    noisy_error_bound,
    summarize,
)
from .learner import StreamRow, TimeBound, predict_stream
from .machine import VM_VERSION, ContractError, ProgramSource
from .quantum import MixingBox, improper_vs_proper_experiment, run_mixture_experiment


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "distinguish": {"k": 4, "q": 0.0, "r": 0.0, "trials": 200, "seed": 0,
                    "stage_cap": 10**6, "corpus": "builtin", "out": None},
    "mixture": {"k": 4, "q": 0.0, "r": 0.0, "trials": 1, "seed": 0, "stage_cap": 10**6,
                "basis": None, "chooser": None, "corpus": "builtin", "improper": False,
                "out": None},
    "bell": {"fa": "program:alternating", "fb": "coin", "target": "pr", "bound": "exp",
             "rounds": 10000, "seed": 0, "window": 500, "predict": "x", "min_tail": 100,
             "out": None, "report": None},
    "learn": {"source": "program:alternating", "bound": "exp", "rounds": 10000, "seed": 0,
              "out": None},
    "bounds": {"k": "2..20", "q": None, "scan_q": False, "step": 0.005, "out": None},
}


OUTPUT_KEYS = ("out", "report")


# -- parsing helpers ---------------------------------------------------------

def _int(text) -> int:
    """Integers, also written as ``1e6``."""
    if isinstance(text, int):
        return text
    try:
        return int(text)
    except ValueError:
        v = float(text)
        if v != int(v):
            raise argparse.ArgumentTypeError(f"not an integer: {text}") from None
        return int(v)


def _k_range(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if ".." in str(text):
        lo, hi = str(text).split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in str(text).split(",")]


def choosers(text: str):
    """``builtin``, ``max:<bits>`` or a comma list of corpus names / ``bits:`` / ``asm:``."""
    if text == "builtin":
        return corpus.items()
    if text.startswith("max:"):
        return corpus.items(int(text[4:]))
    return [(name, corpus.get(name)) for name in text.split(",")]


def make_source(text: str, seed: int, slot: int) -> SequenceSource:
    """``coin`` (seeded, stream ``slot``) or ``program:<name>`` / a corpus name."""
    if text == "coin":
        return CoinSource(seed, slot)
    name = text[8:] if text.startswith("program:") else text
    return ProgramSource(corpus.get(name))


def _csv_text(cmd: str, cfg: dict, header, rows, trailer=()) -> str:
    buf = io.StringIO()
    buf.write(f"# ctsim {cmd}\n# vm_version {VM_VERSION}\n")
    # destinations are not parameters; leaving them out keeps files comparable
    recorded = {k: v for k, v in cfg.items() if k not in OUTPUT_KEYS}
    buf.write("# config " + json.dumps(recorded, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    for line in trailer:
        buf.write("# " + line + "\n")
    return buf.getvalue()


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _distinguish_config(cfg) -> DistinguishConfig:
    if not 0 <= cfg["r"] < 0.5:
        raise ConfigError("r must lie in [0, 1/2)")
    return DistinguishConfig(k=cfg["k"], q=Fraction(repr(float(cfg["q"]))),
                             stage_cap=cfg["stage_cap"])


# -- subcommands ---------------------------------------------------------------

def cmd_distinguish(cfg: dict) -> int:
    dc = _distinguish_config(cfg)
    ch = choosers(cfg["corpus"])
    rows = monte_carlo(ch, dc, cfg["trials"], cfg["seed"], cfg["r"])
    s = summarize(rows, dc.k, dc.q)
    summary = {"trials": s.trials, "errors": s.errors, "cap_exhausted": s.cap_exhausted,
               "error_rate": s.error_rate, "bound": s.bound, "sigma": s.sigma,
               "within_bound": s.within_bound}
    _emit(_csv_text("distinguish", cfg, rows[0].CSV_FIELDS if rows else (),
                    [r.as_csv() for r in rows], ["summary " + json.dumps(summary, sort_keys=True)]),
          cfg["out"])
    print(f"error_rate={s.error_rate:.4f} bound={s.bound:.4f} cap_exhausted={s.cap_exhausted}",
          file=sys.stderr)
    return 0


MIXTURE_FIELDS = ("trial_seed", "basis_truth", "chooser_program", "r", "k", "q", "verdict",
                  "correct", "stage", "qubits_consumed")


def cmd_mixture(cfg: dict) -> int:
    dc = _distinguish_config(cfg)
    if cfg["basis"] not in (None, "X", "Z"):
        raise ConfigError("basis must be X or Z")
    ch = [(cfg["chooser"], corpus.get(cfg["chooser"]))] if cfg["chooser"] else choosers(cfg["corpus"])
    rows = []
    correct = 0
    for i in range(cfg["trials"]):
        seed = cfg["seed"] + i
        name, prog = ch[i % len(ch)]
        pick = RawStream(seed, 0).bit()
        rng = RawStream(seed, 3)
        if cfg["improper"]:
            box = MixingBox("Z", ProgramSource(prog), cfg["r"])
            slot = X if pick == 0 else Z
            res = improper_vs_proper_experiment(box, CoinSource(seed, 1), dc, rng, slot)
            truth = slot
        else:
            basis = cfg["basis"] or ("X" if pick == 0 else "Z")
            box = MixingBox(basis, ProgramSource(prog), cfg["r"])
            res = run_mixture_experiment(box, dc, rng)
            truth = basis
        correct += res.correct
        rows.append([seed, truth, prog.raw.text, repr(float(cfg["r"])), dc.k, str(dc.q),
                     res.verdict.answer, int(res.correct), res.verdict.stage,
                     res.qubits_consumed])
    n = cfg["trials"]
    b = error_bound(dc.k) if dc.q == 0 else noisy_error_bound(dc.k, float(dc.q))
    summary = {"trials": n, "successes": correct, "success_rate": correct / n if n else 0.0,
               "bound": b}
    _emit(_csv_text("mixture", cfg, MIXTURE_FIELDS, rows,
                    ["summary " + json.dumps(summary, sort_keys=True)]), cfg["out"])
    return 0


def cmd_bell(cfg: dict) -> int:
    bound = TimeBound.parse(cfg["bound"])
    tgt = bell.target(cfg["target"])
    fa = make_source(cfg["fa"], cfg["seed"], 1)
    fb = make_source(cfg["fb"], cfg["seed"], 2)
    report, records = bell.run_bell_attack(fa, fb, tgt, bound, cfg["rounds"], cfg["seed"],
                                           predict=cfg["predict"], window=cfg["window"],
                                           min_tail=cfg["min_tail"])
    strategy = (bell.decompose_known_x if cfg["predict"] == "x" else bell.decompose_known_y)(tgt)
    if bell.replay_check(records, strategy, cfg["seed"]):
        raise ContractError("replay check failed: outputs used forbidden information")
    _emit(_csv_text("bell", cfg, bell.RoundRecord.CSV_FIELDS, [r.as_csv() for r in records]),
          cfg["out"])
    js = report.to_json(config=cfg, vm_version=VM_VERSION)
    if cfg["report"]:
        with open(cfg["report"], "w", encoding="utf-8") as fh:
            fh.write(js + "\n")
    print(f"lock_round={report.lock_round} S_post_lock={report.s_post_lock} "
          f"S_overall={report.s_overall}", file=sys.stderr)
    return 0


def cmd_learn(cfg: dict) -> int:
    bound = TimeBound.parse(cfg["bound"])
    src = make_source(cfg["source"], cfg["seed"], 1)
    rep = predict_stream(src, bound, cfg["rounds"])
    fc = rep.final_candidate
    summary = {"mind_changes": len(rep.mind_changes), "last_error_round": rep.last_error_round,
               "abstentions": rep.abstentions, "accuracy": rep.accuracy,
               "final_candidate": None if fc is None else [fc.left, fc.right]}
    _emit(_csv_text("learn", cfg, StreamRow.CSV_FIELDS, [r.as_csv() for r in rep.rows],
                    ["summary " + json.dumps(summary, sort_keys=True)]), cfg["out"])
    return 0


def cmd_bounds(cfg: dict) -> int:
    ks = _k_range(cfg["k"])
    if any(k < 2 for k in ks):
        raise ConfigError("k must be >= 2")
    q = cfg["q"]
    header = ["k", "error_bound"] + (["noisy_error_bound"] if q is not None else [])
    rows = []
    for k in ks:
        row = [k, repr(error_bound(k))]
        if q is not None:
            v = noisy_error_bound(k, float(q))
            row.append("divergent" if math.isinf(v) else repr(v))
        rows.append(row)
    trailer = []
    if cfg["scan_q"]:
        thr = noise_threshold(Fraction(repr(float(cfg["step"]))))
        trailer.append(f"threshold {thr!r}")
        trailer.append(f"decay_rate_at_threshold {noisy_decay_rate(thr)!r}")
    _emit(_csv_text("bounds", cfg, header, rows, trailer), cfg["out"])
    return 0


COMMANDS = {"distinguish": cmd_distinguish, "mixture": cmd_mixture, "bell": cmd_bell,
            "learn": cmd_learn, "bounds": cmd_bounds}


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 1), not invariant failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: config error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctsim", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS  # only explicit flags override the config file

    def common(sp):
        sp.add_argument("--config", default=S, help="JSON file with parameters")
        sp.add_argument("--seed", type=_int, default=S)
        sp.add_argument("--out", default=S, help="CSV path (default: standard output)")

    def search(sp):
        sp.add_argument("--k", type=_int, default=S)
        sp.add_argument("--q", type=float, default=S, help="flip tolerance (0 = exact)")
        sp.add_argument("--r", type=float, default=S, help="flip rate of the computable side")
        sp.add_argument("--trials", type=_int, default=S)
        sp.add_argument("--stage-cap", dest="stage_cap", type=_int, default=S)
        sp.add_argument("--corpus", default=S,
                        help="builtin, max:<bits>, or comma list of names/bits:/asm:")

    d = sub.add_parser("distinguish", help="coin-vs-program Monte Carlo")
    common(d)
    search(d)

    m = sub.add_parser("mixture", help="measure Alice's mixing box and name its basis")
    common(m)
    search(m)
    m.add_argument("--basis", choices=("X", "Z"), default=S)
    m.add_argument("--chooser", default=S)
    m.add_argument("--improper", action="store_true", default=S)

    b = sub.add_parser("bell", help="computability attack on a CHSH test")
    common(b)
    b.add_argument("--fa", default=S, help="Alice's settings: coin or program:<name>")
    b.add_argument("--fb", default=S, help="Bob's settings: coin or program:<name>")
    b.add_argument("--target", choices=tuple(bell.TARGETS), default=S)
    b.add_argument("--bound", default=S, help="exp, poly:D or table:v0,v1,...")
    b.add_argument("--rounds", type=_int, default=S)
    b.add_argument("--window", type=_int, default=S)
    b.add_argument("--predict", choices=("x", "y"), default=S)
    b.add_argument("--min-tail", dest="min_tail", type=_int, default=S)
    b.add_argument("--report", default=S, help="JSON report path")

    lr = sub.add_parser("learn", help="next-value prediction of a stream")
    common(lr)
    lr.add_argument("--source", default=S)
    lr.add_argument("--bound", default=S)
    lr.add_argument("--rounds", type=_int, default=S)

    bo = sub.add_parser("bounds", help="error-bound tables")
    bo.add_argument("--config", default=S)
    bo.add_argument("--out", default=S)
    bo.add_argument("--k", default=S, help="e.g. 4, 2..8 or 3,5,7")
    bo.add_argument("--q", type=float, default=S)
    bo.add_argument("--scan-q", dest="scan_q", action="store_true", default=S)
    bo.add_argument("--step", type=float, default=S)
    return p


def resolve(args: argparse.Namespace) -> dict:
    given = vars(args).copy()
    cmd = given.pop("command")
    cfg = dict(DEFAULTS[cmd])
    path = given.pop("config", None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.update(loaded)
    cfg.update(given)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (ContractError, AssertionError) as exc:
        print(f"internal invariant failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
