"""Named chooser programs used by the experiments.

All of them emit infinitely many bits and are at most 18 bits long, so the
dovetailing search reaches them below a stage of 2**19.
"""

from __future__ import annotations

from .machine import Program, assemble

SOURCES = {
    "zeros": "OUT0; JMP 0",
    "ones": "OUT1; JMP 0",
    "zeros_jz": "OUT0; JZ r0 0",
    "ones_jz": "OUT1; JZ r3 0",
    "alternating": "OUT0; OUT1; JMP 0",
    "alternating10": "OUT1; OUT0; JMP 0",
    "one_then_zeros": "OUT1; OUT0; JMP 1",
    "zero_then_ones": "OUT0; OUT1; JMP 1",
    "counter_ones": "INC r2; OUT1; JMP 0",
    "period3_001": "OUT0; OUT0; OUT1; JMP 0",
    "period3_011": "OUT0; OUT1; OUT1; JMP 0",
}

BUILTIN: dict[str, Program] = {name: Program(assemble(src)) for name, src in SOURCES.items()}


def get(name: str) -> Program:
    """Look up a corpus program by name, or parse ``bits:<raw>`` / ``asm:<listing>``."""
    if name in BUILTIN:
        return BUILTIN[name]
    if name.startswith("bits:"):
        return Program(name[5:])
    if name.startswith("asm:"):
        return Program(assemble(name[4:]))
    raise KeyError(f"unknown program {name!r}; known: {', '.join(BUILTIN)}")


def items(max_length: int | None = None) -> list[tuple[str, Program]]:
    return [(n, p) for n, p in BUILTIN.items() if max_length is None or p.length <= max_length]
