"""Two-party simulator of interactive parity-exchange reconciliation.

Alice and Bob hold equal-length bit strings differing at unknown
positions.  They repeatedly shuffle with a shared permutation, partition
into blocks, and compare block parities over a public channel; a
mismatched block is bisected to locate and flip one of Bob's bits.  After
the block passes, parities of random subsets are compared until enough
consecutive agreements have accumulated.

Two variants are simulated.  In the original protocol (``BBBSS``) the
last bit of every compared block and subset is discarded to pay for the
disclosed parity.  In the ``CASCADE`` variant nothing is discarded;
instead, every correction triggers re-checks of the earlier passes'
blocks that contain the flipped bit, which can expose errors those passes
missed ("back-correction").

Both parties live in one process.  Every publicly exchanged parity,
deletion, and correction is appended to a :class:`Transcript`, so the
information leaked to an eavesdropper is exactly the transcript ledger.
The simulator is omniscient (it can compare the two strings directly) but
only uses that power for outcome metrics and internal sanity checks,
never to steer the protocol.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .error_model import ErrorPattern, GammaIntensity, TimeUnitLayout, recommend_block_size

__all__ = [
    "AUTO_BLOCK_SIZE",
    "BBBSS",
    "CASCADE",
    "CascadeConfig",
    "Event",
    "KeyPair",
    "PassRecord",
    "ProtocolError",
    "ReconcileOutcome",
    "Transcript",
    "bisect_error",
    "bits_from_string",
    "cascade_back_correction",
    "make_key_pair",
    "parity",
    "partition",
    "random_subset_round",
    "reconcile",
    "run_pass",
    "shared_permutation",
]

BBBSS = "bbbss"
CASCADE = "cascade"
AUTO_BLOCK_SIZE = "auto"

# Event kinds.  Comparison and bisection events each disclose one parity.
COMPARE_BLOCK = "compare-block"
COMPARE_SUBSET = "compare-subset"
BISECT = "bisect"
CORRECT = "correct"
DELETE = "delete"
PARITY_EVENT_KINDS = frozenset({COMPARE_BLOCK, COMPARE_SUBSET, BISECT})

# Independent deterministic substreams derived from the session seed.
_PERM_STREAM = 1
_SUBSET_STREAM = 2


class ProtocolError(RuntimeError):
    """An internal protocol invariant was violated (simulator bug)."""


class KeyPair:
    """Alice's and Bob's equal-length bit arrays.

    Corrections flip Bob's bits only; deletions shorten both arrays.
    """

    __slots__ = ("alice", "bob")

    def __init__(self, alice, bob):
        alice = np.asarray(alice, dtype=np.uint8)
        bob = np.asarray(bob, dtype=np.uint8)
        if alice.ndim != 1 or bob.ndim != 1:
            raise ValueError("keys must be one-dimensional bit arrays")
        if alice.shape != bob.shape:
            raise ValueError(
                f"key lengths differ: {alice.shape[0]} vs {bob.shape[0]}"
            )
        if alice.size and (alice.max() > 1 or bob.max() > 1):
            raise ValueError("keys must contain only bits 0 and 1")
        self.alice = alice
        self.bob = bob

    def __len__(self) -> int:
        return int(self.alice.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    @classmethod
    def from_strings(cls, alice: str, bob: str) -> "KeyPair":
        return cls(bits_from_string(alice), bits_from_string(bob))

    def difference_positions(self) -> np.ndarray:
        return np.nonzero(self.alice != self.bob)[0]

    def residual_errors(self) -> int:
        return int(np.count_nonzero(self.alice != self.bob))


def bits_from_string(s: str) -> np.ndarray:
    """'0011...' -> uint8 array."""
    return np.frombuffer(s.encode("ascii"), dtype=np.uint8) - ord("0")


@dataclass(frozen=True)
class CascadeConfig:
    """Protocol parameters.

    ``initial_block_size`` may be the string ``"auto"``, to be resolved
    against a model via :meth:`resolve`; ``reconcile`` requires a concrete
    integer.  ``block_growth`` multiplies the block size every pass.
    ``termination_successes`` is the number of consecutive agreeing subset
    comparisons, counted since the last correction, that ends the run.
    """

    initial_block_size: int | str = AUTO_BLOCK_SIZE
    num_passes: int = 4
    block_growth: int = 2
    termination_successes: int = 20
    variant: str = BBBSS
    seed: int = 0

    def __post_init__(self) -> None:
        k = self.initial_block_size
        if isinstance(k, str):
            if k != AUTO_BLOCK_SIZE:
                raise ValueError(f"initial_block_size must be an int or 'auto', got {k!r}")
        elif k < 1:
            raise ValueError(f"initial_block_size must be >= 1, got {k!r}")
        if self.num_passes < 1:
            raise ValueError(f"num_passes must be >= 1, got {self.num_passes!r}")
        if self.block_growth < 2:
            raise ValueError(f"block_growth must be >= 2, got {self.block_growth!r}")
        if self.termination_successes < 1:
            raise ValueError(
                f"termination_successes must be >= 1, got {self.termination_successes!r}"
            )
        if self.variant not in (BBBSS, CASCADE):
            raise ValueError(f"variant must be {BBBSS!r} or {CASCADE!r}, got {self.variant!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed!r}")

    def resolve(self, layout: TimeUnitLayout, g: GammaIntensity) -> "CascadeConfig":
        """Return a copy with ``"auto"`` replaced by the recommended size."""
        if self.initial_block_size == AUTO_BLOCK_SIZE:
            return replace(self, initial_block_size=recommend_block_size(layout, g))
        return self


@dataclass(frozen=True)
class Event:
    """One public-channel event.

    ``round_index`` is the block pass for pass events and the subset round
    otherwise.  ``lo:hi`` ranges are positions in the round's shuffled
    order (for subset bisections: ordinal positions within the drawn
    subset order).  ``index`` for corrections and deletions is a position
    in the current key coordinates at event time; deletions recorded
    within one block pass are applied together once the pass completes.
    """

    kind: str
    round_index: int
    lo: int = -1
    hi: int = -1
    parity_a: int = -1
    parity_b: int = -1
    index: int = -1
    subset: tuple[int, ...] = ()

    def to_line(self) -> str:
        if self.kind in (COMPARE_BLOCK, BISECT):
            return (
                f"{self.kind} round={self.round_index} range={self.lo}:{self.hi} "
                f"a={self.parity_a} b={self.parity_b}"
            )
        if self.kind == COMPARE_SUBSET:
            bits = ",".join(map(str, self.subset))
            return (
                f"{self.kind} round={self.round_index} bits={bits} "
                f"a={self.parity_a} b={self.parity_b}"
            )
        return f"{self.kind} round={self.round_index} index={self.index}"

    @classmethod
    def from_line(cls, line: str) -> "Event":
        parts = line.split()
        kind = parts[0]
        kv = dict(p.split("=", 1) for p in parts[1:])
        rnd = int(kv["round"])
        if kind in (COMPARE_BLOCK, BISECT):
            lo, hi = kv["range"].split(":")
            return cls(kind, rnd, lo=int(lo), hi=int(hi),
                       parity_a=int(kv["a"]), parity_b=int(kv["b"]))
        if kind == COMPARE_SUBSET:
            bits = tuple(int(x) for x in kv["bits"].split(",")) if kv["bits"] else ()
            return cls(kind, rnd, parity_a=int(kv["a"]), parity_b=int(kv["b"]),
                       subset=bits)
        if kind in (CORRECT, DELETE):
            return cls(kind, rnd, index=int(kv["index"]))
        raise ValueError(f"unknown event record: {line!r}")


class Transcript:
    """Ordered public-channel ledger with running leak counters."""

    def __init__(self) -> None:
        self.events: list[Event] = []
        self.parities_revealed = 0
        self.bits_deleted = 0
        self.corrections_made = 0

    def add(self, event: Event) -> None:
        self.events.append(event)
        if event.kind in PARITY_EVENT_KINDS:
            self.parities_revealed += 1
        elif event.kind == DELETE:
            self.bits_deleted += 1
        elif event.kind == CORRECT:
            self.corrections_made += 1

    def to_lines(self) -> list[str]:
        return [e.to_line() for e in self.events]

    def write(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Transcript":
        t = cls()
        for line in lines:
            line = line.strip()
            if line:
                t.add(Event.from_line(line))
        return t


@dataclass(frozen=True)
class ReconcileOutcome:
    final_length: int
    residual_error_count: int
    leaked_parities: int
    deleted_bits: int
    passes_executed: int
    subset_rounds: int
    success: bool


@dataclass
class PassRecord:
    """Partition of one completed pass, kept for Cascade back-correction."""

    pass_index: int
    permutation: np.ndarray
    inverse: np.ndarray
    block_size: int

    def block_span(self, orig_index: int) -> tuple[int, int]:
        """Shuffled-order span of the block containing an original position."""
        pos = int(self.inverse[orig_index])
        lo = (pos // self.block_size) * self.block_size
        return lo, min(lo + self.block_size, len(self.permutation))


def make_key_pair(n: int, pattern: ErrorPattern, seed: int) -> KeyPair:
    """Uniform random bits for Alice; Bob differs exactly at the pattern."""
    if pattern.n != n:
        raise ValueError(f"pattern is for a {pattern.n}-bit key, expected {n}")
    rng = np.random.default_rng(seed)
    alice = rng.integers(0, 2, size=n, dtype=np.uint8)
    bob = alice.copy()
    if pattern.positions:
        bob[list(pattern.positions)] ^= 1
    return KeyPair(alice, bob)


def shared_permutation(n: int, round_index: int, seed: int) -> np.ndarray:
    """Deterministic unbiased shuffle of [0, n) shared by both parties."""
    if n < 1:
        raise ValueError(f"permutation length must be >= 1, got {n!r}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, _PERM_STREAM, round_index]))
    return rng.permutation(n)


def partition(n: int, k: int) -> list[tuple[int, int]]:
    """Consecutive ranges of size ``k`` covering [0, n); the last may be short."""
    if k < 1 or k > n:
        raise ValueError(f"block size must satisfy 1 <= k <= {n}, got {k!r}")
    return [(lo, min(lo + k, n)) for lo in range(0, n, k)]


def parity(bits: np.ndarray, span: tuple[int, int]) -> int:
    """XOR of the bits in [lo, hi); an empty span has parity 0."""
    lo, hi = span
    if lo < 0 or hi > len(bits) or lo > hi:
        raise ValueError(f"span {span!r} out of bounds for length {len(bits)}")
    return int(bits[lo:hi].sum(dtype=np.int64)) & 1


def _parity_of(bits: np.ndarray, selection: np.ndarray) -> int:
    return int(bits[selection].sum(dtype=np.int64)) & 1


def _bisect(
    alice: np.ndarray,
    bob: np.ndarray,
    order: np.ndarray,
    lo: int,
    hi: int,
    transcript: Transcript,
    round_index: int,
) -> int:
    """Locate one differing position inside order[lo:hi] (odd difference count).

    Each halving publicly compares the left half's parities (one event);
    the right half's parity is implied.  When the whole range mismatches,
    exactly one half has an odd difference count, so descending into the
    mismatching half (left first) always makes progress.  Returns the
    located position in the coordinates ``order`` maps into.
    """
    while hi - lo > 1:
        mid = lo + (hi - lo + 1) // 2
        pa = _parity_of(alice, order[lo:mid])
        pb = _parity_of(bob, order[lo:mid])
        transcript.add(Event(BISECT, round_index, lo=lo, hi=mid, parity_a=pa, parity_b=pb))
        if pa != pb:
            hi = mid
        else:
            lo = mid
    found = int(order[lo])
    if alice[found] == bob[found]:
        raise ProtocolError(
            "bisection landed on an agreeing bit; the searched range had an "
            "even number of differences"
        )
    return found


def bisect_error(
    alice: np.ndarray,
    bob: np.ndarray,
    span: tuple[int, int],
    transcript: Transcript,
    round_index: int = 0,
) -> int:
    """Bisective search over a contiguous span with mismatched parity."""
    if parity(alice, span) == parity(bob, span):
        raise ProtocolError(f"span {span!r} parities agree; nothing to bisect")
    lo, hi = span
    return _bisect(alice, bob, np.arange(len(alice)), lo, hi, transcript, round_index)


def _apply_deletions(
    pair: KeyPair, indices: Sequence[int], transcript: Transcript, round_index: int
) -> None:
    """Record and apply deletions; indices are pre-deletion coordinates."""
    if not indices:
        return
    for idx in indices:
        transcript.add(Event(DELETE, round_index, index=int(idx)))
    pair.alice = np.delete(pair.alice, list(indices))
    pair.bob = np.delete(pair.bob, list(indices))


def cascade_back_correction(
    pair: KeyPair,
    history: list[PassRecord],
    new_index: int,
    transcript: Transcript,
) -> int:
    """Re-check earlier passes' blocks around a freshly flipped bit.

    Every recorded block containing the flipped position gets its parities
    re-compared; a mismatch is bisected and the resulting flip recurses
    into the other recorded passes.  Returns the number of additional
    corrections.  Only meaningful for the Cascade variant, where no bits
    are ever deleted and recorded partitions stay valid.
    """
    corrections = 0
    queue: deque[tuple[PassRecord, int, int]] = deque(
        (rec, *rec.block_span(new_index)) for rec in history
    )
    while queue:
        rec, lo, hi = queue.popleft()
        sel = rec.permutation[lo:hi]
        pa = _parity_of(pair.alice, sel)
        pb = _parity_of(pair.bob, sel)
        transcript.add(
            Event(COMPARE_BLOCK, rec.pass_index, lo=lo, hi=hi, parity_a=pa, parity_b=pb)
        )
        if pa == pb:
            continue
        found = _bisect(
            pair.alice, pair.bob, rec.permutation, lo, hi, transcript, rec.pass_index
        )
        pair.bob[found] ^= 1
        transcript.add(Event(CORRECT, rec.pass_index, index=found))
        corrections += 1
        for other in history:
            if other is not rec:
                queue.append((other, *other.block_span(found)))
    return corrections


def run_pass(
    pair: KeyPair,
    pass_index: int,
    config: CascadeConfig,
    transcript: Transcript,
    history: list[PassRecord] | None = None,
) -> int:
    """One block pass: shuffle, partition, compare, bisect mismatches.

    Pass 0 runs on the raw bit order; later passes use the shared
    shuffle for their round.  The block size is the configured initial
    size grown by ``block_growth ** pass_index`` (capped at the current
    key length).  In BBBSS mode the last bit of every compared block is
    deleted once the whole pass has completed.  Returns the number of
    corrections made, including Cascade back-corrections.
    """
    n = len(pair)
    if n == 0:
        return 0
    k = _concrete_block_size(config) * config.block_growth**pass_index
    k = min(k, n)
    if pass_index == 0:
        perm = np.arange(n)
    else:
        perm = shared_permutation(n, pass_index, config.seed)
    corrections = 0
    doomed: list[int] = []
    for lo, hi in partition(n, k):
        sel = perm[lo:hi]
        pa = _parity_of(pair.alice, sel)
        pb = _parity_of(pair.bob, sel)
        transcript.add(
            Event(COMPARE_BLOCK, pass_index, lo=lo, hi=hi, parity_a=pa, parity_b=pb)
        )
        if pa != pb:
            found = _bisect(pair.alice, pair.bob, perm, lo, hi, transcript, pass_index)
            pair.bob[found] ^= 1
            transcript.add(Event(CORRECT, pass_index, index=found))
            corrections += 1
            if config.variant == CASCADE and history:
                corrections += cascade_back_correction(pair, history, found, transcript)
        if config.variant == BBBSS:
            doomed.append(int(perm[hi - 1]))
    if history is not None:
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(n)
        history.append(PassRecord(pass_index, perm, inverse, k))
    if config.variant == BBBSS:
        _apply_deletions(pair, doomed, transcript, pass_index)
    return corrections


def random_subset_round(
    pair: KeyPair,
    config: CascadeConfig,
    round_index: int,
    transcript: Transcript,
    history: list[PassRecord] | None = None,
) -> bool:
    """One random-subset comparison; returns True if a bit was corrected.

    The subset includes each position independently with probability 1/2,
    drawn from the shared per-round stream (an empty draw is redrawn).  On
    parity mismatch the subset is put in a shared random order and
    bisected like a block.  In BBBSS mode the subset's last bit (its
    highest position) is deleted after the round.
    """
    n = len(pair)
    if n < 2:
        raise ValueError(f"subset rounds need a key of length >= 2, got {n}")
    rng = np.random.default_rng(
        np.random.SeedSequence([config.seed, _SUBSET_STREAM, round_index])
    )
    while True:
        mask = rng.integers(0, 2, size=n, dtype=np.uint8)
        if mask.any():
            break
    subset = np.nonzero(mask)[0]
    pa = _parity_of(pair.alice, subset)
    pb = _parity_of(pair.bob, subset)
    transcript.add(
        Event(
            COMPARE_SUBSET,
            round_index,
            parity_a=pa,
            parity_b=pb,
            subset=tuple(int(i) for i in subset),
        )
    )
    corrected = False
    if pa != pb:
        order = subset[rng.permutation(len(subset))]
        found = _bisect(pair.alice, pair.bob, order, 0, len(order), transcript, round_index)
        pair.bob[found] ^= 1
        transcript.add(Event(CORRECT, round_index, index=found))
        corrected = True
        if config.variant == CASCADE and history:
            cascade_back_correction(pair, history, found, transcript)
    if config.variant == BBBSS:
        _apply_deletions(pair, [int(subset[-1])], transcript, round_index)
    return corrected


def _concrete_block_size(config: CascadeConfig) -> int:
    k = config.initial_block_size
    if isinstance(k, str):
        raise ValueError(
            "initial_block_size is 'auto'; resolve the config against a model "
            "(CascadeConfig.resolve) before reconciling"
        )
    return k


def reconcile(
    pair: KeyPair, config: CascadeConfig, transcript: Transcript | None = None
) -> ReconcileOutcome:
    """Run the full protocol on ``pair`` (mutated in place).

    Executes ``num_passes`` block passes, then random-subset rounds until
    ``termination_successes`` consecutive comparisons have agreed since
    the last correction (or the key becomes too short for subsets).  Pass
    a :class:`Transcript` to capture the public-channel ledger.
    Deterministic given the pair and the config.
    """
    _concrete_block_size(config)
    t = transcript if transcript is not None else Transcript()
    history: list[PassRecord] | None = [] if config.variant == CASCADE else None
    passes_executed = 0
    for p in range(config.num_passes):
        if len(pair) == 0:
            break
        run_pass(pair, p, config, t, history)
        passes_executed += 1
    successes = 0
    rounds = 0
    while successes < config.termination_successes and len(pair) >= 2:
        corrected = random_subset_round(pair, config, rounds, t, history)
        rounds += 1
        successes = 0 if corrected else successes + 1
    residual = pair.residual_errors()
    return ReconcileOutcome(
        final_length=len(pair),
        residual_error_count=residual,
        leaked_parities=t.parities_revealed,
        deleted_bits=t.bits_deleted,
        passes_executed=passes_executed,
        subset_rounds=rounds,
        success=residual == 0,
    )
