"""Step-bounded stack machine over bit words, plus exhaustive program enumeration.

Programs are arbitrary bit words read as a stream of 4-bit opcodes,
zero-extended indefinitely, so every word is a valid program and the
zero opcode HALT terminates any run that walks off the end of the code.
The full opcode table ships in opcodes.txt next to this module.

Key consequences of the table used throughout the package:
  * READBIT is the only tape access and its single immediate nibble
    addresses tape 0-3, bit index 0-3.  Output of any program therefore
    depends only on the first VIEW_BITS bits of each input tape
    (zero-extended), which the scan code exploits to collapse inputs.
  * A run either halts, exhausts its budget, or provably loops; loops
    are detected by machine-state recurrence so large budgets cost
    nothing extra.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

from .codec import Word, encode_rat

MAX_STEP_BUDGET = 1 << 24
MAX_INPUT_TAPES = 4
STACK_CAP = 4096
VIEW_BITS = 4

HALT = 0
NOP = 1
PUSH0 = 2
PUSH1 = 3
DUP = 4
DROP = 5
XOR = 6
AND = 7
NOT = 8
READBIT = 9
JZ = 10
EMIT0 = 11
EMITBIT = 12
EMITHALF = 13
EMIT1 = 14
EMITRAT = 15

OPCODE_NAMES = [
    "HALT", "NOP", "PUSH0", "PUSH1", "DUP", "DROP", "XOR", "AND",
    "NOT", "READBIT", "JZ", "EMIT0", "EMITBIT", "EMITHALF", "EMIT1", "EMITRAT",
]

_RAT_0 = encode_rat(Fraction(0))
_RAT_1 = encode_rat(Fraction(1))
_RAT_HALF = encode_rat(Fraction(1, 2))
_RAT_BIT = (_RAT_0, _RAT_1)

# Loop detection records (pc, stack) snapshots once a run has lasted
# _TRACK_AFTER steps, and only while the stack is small; larger stacks
# mean the program is pushing its way toward the stack cap and will
# halt on its own within O(STACK_CAP) steps.  Any state cycle recurs
# forever, so starting tracking late never misses a loop.
_TRACK_STACK_LIMIT = 64
_TRACK_AFTER = 24

_NIBBLES_CACHE: dict = {}


def _nibbles(code: Word):
    """Code as a tuple of 4-bit opcodes, zero-extended past the end."""
    nibs = _NIBBLES_CACHE.get(code)
    if nibs is None:
        padded = code + "0" * (-len(code) % 4)
        nibs = tuple(int(padded[i : i + 4], 2) for i in range(0, len(padded), 4))
        if len(_NIBBLES_CACHE) < (1 << 18) and len(code) <= 64:
            _NIBBLES_CACHE[code] = nibs
    return nibs


@dataclass(frozen=True)
class EvalResult:
    output: Word
    halted: bool
    steps_used: int


def tape_view(w: Word) -> str:
    """The VIEW_BITS-bit zero-extended prefix that fully determines tape reads."""
    return w[:VIEW_BITS] + "0" * (VIEW_BITS - len(w)) if len(w) < VIEW_BITS else w[:VIEW_BITS]


def _run(
    nibs,
    step_budget: int,
    tapes: Sequence[Word],
    trace: Optional[Callable[[int, int, str, int], None]] = None,
) -> EvalResult:
    """Interpreter core over a precomputed nibble tuple; exact semantics."""
    n_slots = len(nibs)
    n_tapes = len(tapes)
    pc = 0
    stack: List[int] = []
    steps = 0
    seen = None

    while steps < step_budget:
        if steps >= _TRACK_AFTER and len(stack) <= _TRACK_STACK_LIMIT:
            if seen is None:
                seen = set()
            state = (pc, bytes(stack))
            if state in seen:
                # Deterministic machine revisiting a state never halts.
                return EvalResult("", False, step_budget)
            if len(seen) < 1 << 18:
                seen.add(state)
        op = nibs[pc] if pc < n_slots else HALT
        steps += 1
        if trace is not None:
            trace(steps, pc, OPCODE_NAMES[op], len(stack))
        if op == HALT:
            return EvalResult("", True, steps)
        if op == READBIT:
            imm = nibs[pc + 1] if pc + 1 < n_slots else 0
            tape, idx = imm >> 2, imm & 3
            if len(stack) >= STACK_CAP:
                return EvalResult("", True, steps)
            if tape < n_tapes and idx < len(tapes[tape]):
                stack.append(int(tapes[tape][idx]))
            else:
                stack.append(0)
            pc += 2
        elif op == EMITBIT:
            b = stack.pop() if stack else 0
            return EvalResult(_RAT_BIT[b], True, steps)
        elif op == EMIT1:
            return EvalResult(_RAT_1, True, steps)
        elif op == EMITRAT:
            return EvalResult("".join(map(str, stack)), True, steps)
        elif op == EMITHALF:
            return EvalResult(_RAT_HALF, True, steps)
        elif op == EMIT0:
            return EvalResult(_RAT_0, True, steps)
        elif op == NOP:
            pc += 1
        elif op == PUSH0 or op == PUSH1:
            if len(stack) >= STACK_CAP:
                return EvalResult("", True, steps)
            stack.append(op - PUSH0)
            pc += 1
        elif op == DUP:
            if len(stack) >= STACK_CAP:
                return EvalResult("", True, steps)
            stack.append(stack[-1] if stack else 0)
            pc += 1
        elif op == DROP:
            if stack:
                stack.pop()
            pc += 1
        elif op == XOR:
            a = stack.pop() if stack else 0
            b = stack.pop() if stack else 0
            stack.append(a ^ b)
            pc += 1
        elif op == AND:
            a = stack.pop() if stack else 0
            b = stack.pop() if stack else 0
            stack.append(a & b)
            pc += 1
        elif op == NOT:
            a = stack.pop() if stack else 0
            stack.append(1 - a)
            pc += 1
        else:  # JZ
            imm = nibs[pc + 1] if pc + 1 < n_slots else 0
            offset = imm - 16 if imm >= 8 else imm
            cond = stack.pop() if stack else 0
            pc = max(pc + 2 + offset, 0) if cond == 0 else pc + 2

    return EvalResult("", False, step_budget)


def eval(
    program: Word,
    step_budget: int,
    inputs: Sequence[Word],
    trace: Optional[Callable[[int, int, str, int], None]] = None,
) -> EvalResult:
    """Run a program for at most step_budget opcode executions.

    One step per executed opcode; immediate nibbles are free.  Returns
    the output word on HALT/EMIT, or the empty word with halted=False
    when the budget runs out.  Stack overflow halts with empty output.
    """
    if step_budget < 0 or step_budget > MAX_STEP_BUDGET:
        raise ValueError(f"step budget must lie in [0, {MAX_STEP_BUDGET}]")
    if len(inputs) > MAX_INPUT_TAPES:
        raise ValueError(f"at most {MAX_INPUT_TAPES} input tapes")
    return _run(_nibbles(program), step_budget, list(inputs), trace)


def reads_no_tape(program: Word) -> bool:
    """True when no nibble of the zero-extended code is READBIT.

    Conservative static check: such a program touches no tape, so its
    result is independent of all inputs.
    """
    return READBIT not in _nibbles(program)


def outputs_on_views(
    program: Word, step_budget: int, keys: Sequence[Tuple[str, str]], advice_view: str
) -> List[Word]:
    """Batch-run one program over many (x view, coin view) pairs."""
    nibs = _nibbles(program)
    return [_run(nibs, step_budget, (xv, zv, advice_view)).output for xv, zv in keys]


def enumerate_programs(max_code_bits: int) -> Iterator[Word]:
    """All words of length 0..max_code_bits in length-then-lex order.

    This order is the canonical tie-break used by every argmin in the
    package.
    """
    if max_code_bits < 0 or max_code_bits > 16:
        raise ValueError("program enumeration supports at most 16 code bits")
    yield ""
    for length in range(1, max_code_bits + 1):
        for value in range(1 << length):
            yield format(value, f"0{length}b")


def program_count(max_code_bits: int) -> int:
    return (1 << (max_code_bits + 1)) - 1


def eval_as_estimator(
    program: Word,
    step_budget: int,
    x: Word,
    random_bits: Word,
    advice: Word,
    bound_M: Fraction,
) -> Fraction:
    """Run a program on tapes [x, random, advice], decode-and-clamp the output."""
    from .codec import decode_clamped

    result = eval(program, step_budget, [x, random_bits, advice])
    return decode_clamped(result.output, bound_M)


_VALUE_CACHE: dict = {}
_VALUE_CACHE_MAX = 1 << 20


def cached_program_value(
    program: Word,
    step_budget: int,
    x: Word,
    random_bits: Word,
    advice: Word,
    bound_M: Fraction,
) -> Fraction:
    """eval_as_estimator memoized on the tape views that determine the output."""
    key = (
        program,
        step_budget,
        tape_view(x),
        tape_view(random_bits),
        tape_view(advice),
        bound_M,
    )
    hit = _VALUE_CACHE.get(key)
    if hit is None:
        if len(_VALUE_CACHE) >= _VALUE_CACHE_MAX:
            _VALUE_CACHE.clear()
        hit = eval_as_estimator(program, step_budget, x, random_bits, advice, bound_M)
        _VALUE_CACHE[key] = hit
    return hit
