"""A dense monotone counter machine.

Every bit string is a program.  Instructions are read MSB-first::

    000            OUT0   append 0 to the output
    001            OUT1   append 1 to the output
    010 rr         INC r
    011 rr         DEC r  (saturates at 0)
    100 rr aaaaaa  JZ r a  if register r is 0, pc <- a mod n_instr
    101 aaaaaa     JMP a   pc <- a mod n_instr
    110            HALT
    111            NOP

Trailing bits that do not complete an instruction are ignored, one
instruction is one step, and running off the end of the instruction list
halts the machine.  The output tape is append-only, so the output after ``t``
steps is always a prefix of the output after ``s >= t`` steps.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field, replace
from typing import NamedTuple

from .bitstream import (
    BitString,
    PreconditionError,
    SequenceSource,
    SourceExhausted,
    as_bits,
    index_to_program_bits,
    program_bits_to_index,
)

VM_VERSION = "cm4-v1"

OUT0, OUT1, INC, DEC, JZ, JMP, HALT, NOP = range(8)
MNEMONICS = ("OUT0", "OUT1", "INC", "DEC", "JZ", "JMP", "HALT", "NOP")
N_REGISTERS = 4
# total encoded width per opcode
WIDTH = (3, 3, 5, 5, 11, 9, 3, 3)


class ContractError(RuntimeError):
    """A machine operation was applied to a state it is not defined on."""


class Instr(NamedTuple):
    op: int
    reg: int = 0
    addr: int = 0

    def __str__(self) -> str:
        name = MNEMONICS[self.op]
        if self.op in (INC, DEC):
            return f"{name} r{self.reg}"
        if self.op == JZ:
            return f"{name} r{self.reg} {self.addr}"
        if self.op == JMP:
            return f"{name} {self.addr}"
        return name


def decode(raw) -> list[Instr]:
    """Decode a raw bit string into instructions, dropping an incomplete tail."""
    text = as_bits(raw).text
    out = []
    i, n = 0, len(text)
    while i + 3 <= n:
        op = int(text[i : i + 3], 2)
        w = WIDTH[op]
        if i + w > n:
            break
        if op in (INC, DEC):
            out.append(Instr(op, int(text[i + 3 : i + 5], 2)))
        elif op == JZ:
            out.append(Instr(op, int(text[i + 3 : i + 5], 2), int(text[i + 5 : i + 11], 2)))
        elif op == JMP:
            out.append(Instr(op, 0, int(text[i + 3 : i + 9], 2)))
        else:
            out.append(Instr(op))
        i += w
    return out


def encode(instrs) -> BitString:
    parts = []
    for ins in instrs:
        parts.append(format(ins.op, "03b"))
        if ins.op in (INC, DEC, JZ):
            parts.append(format(ins.reg, "02b"))
        if ins.op in (JZ, JMP):
            if not 0 <= ins.addr < 64:
                raise PreconditionError(f"jump field {ins.addr} does not fit in 6 bits")
            parts.append(format(ins.addr, "06b"))
    return BitString("".join(parts))


def assemble(source: str) -> BitString:
    """Encode a ``;``-separated mnemonic listing, e.g. ``"OUT0; JMP 0"``."""
    instrs = []
    for item in filter(None, (s.strip() for s in source.split(";"))):
        name, *args = item.replace(",", " ").split()
        op = MNEMONICS.index(name.upper())
        regs = [int(a.lstrip("rR")) for a in args if a[0] in "rR"]
        nums = [int(a) for a in args if a[0] not in "rR"]
        instrs.append(Instr(op, regs[0] if regs else 0, nums[0] if nums else 0))
    return encode(instrs)


_TRIPLES: dict[tuple[int, int, int], tuple[int, int, int]] = {}


class Program:
    """An immutable program: raw bits plus the resolved instruction code."""

    __slots__ = ("raw", "code")

    def __init__(self, raw):
        self.raw = as_bits(raw)
        instrs = decode(self.raw)
        n = len(instrs)
        # (op, reg, resolved target) triples for the interpreter loop, interned
        # because the trace cache may hold a million programs
        intern = _TRIPLES.setdefault
        self.code = tuple(
            intern(t, t)
            for t in ((i.op, i.reg, i.addr % n if i.op in (JZ, JMP) else 0) for i in instrs)
        )

    @property
    def instructions(self) -> tuple[Instr, ...]:
        return tuple(decode(self.raw))

    @classmethod
    def from_index(cls, n: int) -> Program:
        return cls(index_to_program_bits(n))

    @property
    def length(self) -> int:
        return len(self.raw)

    def __len__(self) -> int:
        return len(self.raw)

    @property
    def index(self) -> int:
        return program_bits_to_index(self.raw)

    def __eq__(self, other) -> bool:
        return isinstance(other, Program) and other.raw == self.raw

    def __hash__(self) -> int:
        return hash(self.raw)

    def __repr__(self) -> str:
        return f"Program({self.raw.text!r})"

    def listing(self) -> str:
        return "; ".join(map(str, self.instructions))


def _prog(p) -> Program:
    return p if isinstance(p, Program) else Program(p)


# ---------------------------------------------------------------------------
# reference step semantics


@dataclass(frozen=True)
class MachineState:
    pc: int = 0
    registers: tuple[int, ...] = (0,) * N_REGISTERS
    output: BitString = field(default_factory=BitString)
    steps: int = 0
    halted: bool = False


def initial_state(program) -> MachineState:
    return MachineState(halted=len(_prog(program).code) == 0)


def step(state: MachineState, program) -> MachineState:
    """Execute exactly one instruction."""
    if state.halted:
        raise ContractError("cannot step a halted machine")
    prog = _prog(program)
    n = len(prog.code)
    op, reg, tgt = prog.code[state.pc]
    regs = list(state.registers)
    output = state.output
    pc = state.pc + 1
    halted = False
    if op == OUT0:
        output = BitString(output.text + "0")
    elif op == OUT1:
        output = BitString(output.text + "1")
    elif op == INC:
        regs[reg] += 1
    elif op == DEC:
        regs[reg] = max(0, regs[reg] - 1)
    elif op == JZ:
        if regs[reg] == 0:
            pc = tgt
    elif op == JMP:
        pc = tgt
    elif op == HALT:
        halted = True
    return replace(
        state,
        pc=pc,
        registers=tuple(regs),
        output=output,
        steps=state.steps + 1,
        halted=halted or pc >= n,
    )


# ---------------------------------------------------------------------------
# static reachability of further output


def _successors(code, i, zero_known, nonzero_known):
    op, reg, tgt = code[i]
    if op == HALT:
        return ()
    if op == JMP:
        return (tgt,)
    if op == JZ:
        if reg in zero_known:
            return (tgt,)
        if reg in nonzero_known:
            return (i + 1,)
        return (tgt, i + 1)
    return (i + 1,)


def output_reachable(code, pc: int, registers) -> bool:
    """Sound test for whether an OUT can still execute from (pc, registers).

    Registers that no reachable instruction can change keep their current
    value, which may resolve JZ branches; the reachable set is shrunk until
    that knowledge stops growing.  ``False`` means the output is final.
    """
    n = len(code)
    zero_known: set[int] = set()
    nonzero_known: set[int] = set()
    while True:
        seen = set()
        stack = [pc]
        while stack:
            i = stack.pop()
            if i >= n or i in seen:
                continue
            seen.add(i)
            stack.extend(_successors(code, i, zero_known, nonzero_known))
        if not any(code[i][0] <= OUT1 for i in seen):
            return False
        incs = {code[i][1] for i in seen if code[i][0] == INC}
        decs = {code[i][1] for i in seen if code[i][0] == DEC}
        zk = {r for r in range(N_REGISTERS) if registers[r] == 0 and r not in incs}
        nk = {r for r in range(N_REGISTERS) if registers[r] > 0 and r not in decs}
        if zk == zero_known and nk == nonzero_known:
            return True
        zero_known, nonzero_known = zk, nk


def output_unbounded_possible(code) -> bool:
    """Whether some OUT reachable from pc 0 lies on a control-flow cycle.

    When this is ``False`` the program emits at most one bit per OUT
    instruction and halts within ``len(code)`` steps.
    """
    n = len(code)
    full = lambda i: _successors(code, i, (), ())  # noqa: E731
    reach = set()
    stack = [0]
    while stack:
        i = stack.pop()
        if i >= n or i in reach:
            continue
        reach.add(i)
        stack.extend(full(i))
    for v in reach:
        if code[v][0] > OUT1:
            continue
        seen = set()
        stack = list(full(v))
        while stack:
            i = stack.pop()
            if i == v:
                return True
            if i >= n or i in seen:
                continue
            seen.add(i)
            stack.extend(full(i))
    return False


# ---------------------------------------------------------------------------
# incremental execution


class Trace:
    """Resumable execution of one program with an emission log.

    ``out[i]`` is output bit ``i`` and ``emit[i]`` the step count at which it
    was written, so the output of ``U_t(p)`` is every bit with
    ``emit[i] <= t``.  ``final`` is set once no further output can appear
    (halted, or proven silent by :func:`output_reachable`).
    """

    __slots__ = ("program", "pc", "regs", "steps", "halted", "final", "out", "emit", "_check_at", "_gap")

    SILENT_CHECK = 64

    def __init__(self, program):
        self.program = _prog(program)
        self.pc = 0
        self.regs = [0] * N_REGISTERS
        self.steps = 0
        self.halted = len(self.program.code) == 0
        self.final = self.halted
        self.out = bytearray()
        self.emit = array("q")
        self._gap = self.SILENT_CHECK
        self._check_at = self.SILENT_CHECK

    def run(self, max_bits: int, step_limit: int, silent_checks: bool = True) -> None:
        """Run until ``max_bits`` are out, the step count hits ``step_limit`` or final.

        With ``silent_checks`` a long silent stretch triggers
        :func:`output_reachable`; a negative answer marks the trace final
        without running it further.
        """
        if self.halted or self.steps >= step_limit or len(self.out) >= max_bits:
            return
        if self.final and silent_checks:
            return
        code = self.program.code
        n = len(code)
        pc, regs, steps = self.pc, self.regs, self.steps
        out, emit = self.out, self.emit
        nbits = len(out)
        halted = False
        check_at = self._check_at if silent_checks else -1
        while steps < step_limit:
            op, reg, tgt = code[pc]
            steps += 1
            pc += 1
            if op <= OUT1:
                out.append(op)
                emit.append(steps)
                nbits += 1
                if check_at >= 0:
                    self._gap = self.SILENT_CHECK
                    check_at = steps + self._gap
                if nbits >= max_bits:
                    halted = pc >= n
                    break
            elif op == INC:
                regs[reg] += 1
            elif op == DEC:
                if regs[reg]:
                    regs[reg] -= 1
            elif op == JZ:
                if not regs[reg]:
                    pc = tgt
            elif op == JMP:
                pc = tgt
            elif op == HALT:
                halted = True
                break
            if pc >= n:
                halted = True
                break
            if steps == check_at:
                if not output_reachable(code, pc, regs):
                    self.final = True
                    break
                self._gap *= 2
                check_at = steps + self._gap
        self.pc, self.steps = pc, steps
        if check_at >= 0:
            self._check_at = check_at
        if halted:
            self.halted = self.final = True

    def bits_within(self, t: int) -> int:
        """Number of output bits present after ``t`` steps (requires ``t <= steps`` or final)."""
        emit = self.emit
        lo, hi = 0, len(emit)
        while lo < hi:
            mid = (lo + hi) // 2
            if emit[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        return lo


@dataclass(frozen=True)
class RunResult:
    output: BitString
    halted: bool
    steps_used: int


def run_bounded(program, t: int) -> RunResult:
    """``U_t(p)``: run from the initial state for at most ``t`` steps."""
    tr = Trace(program)
    tr.run(max_bits=1 << 62, step_limit=t, silent_checks=False)
    return RunResult(BitString.from_bits(tr.out), tr.halted, tr.steps)


def pad_preserving(program, extra: int) -> Program:
    """A program ``extra`` bits longer with the same output at every step budget.

    Jump fields are rewritten to their resolved targets so that appending
    instructions does not change where they land; the free space after the
    original instructions starts with a HALT (reached only where the original
    would have fallen off the end) and is filled with NOPs.  Leftover bits
    shorter than an instruction are left as an ignored tail.
    """
    if extra < 0:
        raise PreconditionError("extra must be a natural number")
    prog = _prog(program)
    n = len(prog.code)
    body = encode(Instr(op, reg, tgt) for op, reg, tgt in prog.code).text
    free = len(prog.raw) + extra - len(body)
    if free < 3:
        return Program(body + "0" * free)
    tail = "110" + "111" * ((free - 3) // 3) + "1" * ((free - 3) % 3)
    out = Program(body + tail)
    assert len(out.code) >= n
    return out


# ---------------------------------------------------------------------------
# enumeration support


class ProgramTable:
    """Cache of traces and static facts keyed by program index.

    Traces are deterministic, so one table can be shared by every trial of an
    experiment; only the comparisons against the sequences differ.
    """

    def __init__(self, retain_below: int = 1 << 20):
        self._traces: dict[int, Trace] = {}
        self._static = bytearray()  # 0 unknown, 255 unbounded, else 1 + number of OUTs
        self.retain_below = retain_below

    def trace(self, index: int, scratch: dict | None = None) -> Trace:
        """The cached trace of ``index``.

        When ``scratch`` is given, traces at or above ``retain_below`` are kept
        there instead, so one long search does not pin them in memory.
        """
        store = self._traces if scratch is None or index < self.retain_below else scratch
        tr = store.get(index)
        if tr is None:
            tr = store[index] = Trace(Program.from_index(index))
        return tr

    def _flag(self, index: int) -> int:
        flags = self._static
        if index >= len(flags):
            flags.extend(bytes(index + 1 - len(flags)))
        f = flags[index]
        if f == 0:
            code = Program.from_index(index).code
            if output_unbounded_possible(code):
                f = 255
            else:
                f = 1 + min(253, sum(1 for op, _, _ in code if op <= OUT1))
            flags[index] = f
        return f

    def may_emit_forever(self, index: int) -> bool:
        return self._flag(index) == 255

    def static_output_bound(self, index: int) -> int | None:
        """An upper bound on the bits program ``index`` can ever emit, or ``None``."""
        f = self._flag(index)
        return None if f == 255 else f - 1

    def __len__(self) -> int:
        return len(self._traces)


class ProgramSource(SequenceSource):
    """The output stream of a program, extended by running it further."""

    kind = "program-driven"
    CHUNK = 256

    def __init__(self, program, step_limit: int = 1 << 40):
        super().__init__()
        self.program = _prog(program)
        self._trace = Trace(self.program)
        self._step_limit = step_limit

    def _produce(self) -> None:
        tr = self._trace
        have = len(tr.out)
        tr.run(have + self.CHUNK, self._step_limit)
        if len(tr.out) == have:
            raise SourceExhausted(f"{self.program!r} emits only {have} bits")
        self._bits.extend(tr.out[len(self._bits) :])

    def describe(self) -> str:
        return f"program:{self.program.raw.text}"
