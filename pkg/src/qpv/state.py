"""Symbolic state: heap chunks, scoped path conditions, store and old-heaps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from .ast import Pos
from .terms import REF, ZERO, Fun, Term, Var, show, simplify

# Distinguished receiver variable of quantified chunk permissions.
R = Var("r", REF)


@dataclass(frozen=True)
class QuantifiedChunk:
    """Holds ``perm[r]`` permission to ``r.field`` for every r; values via ``fvf``."""
    field: str
    fvf: Fun
    perm: Term                  # mentions R and symbolic values only
    origin: Optional[Pos] = field(default=None, compare=False)

    def perm_at(self, rcv: Term) -> Term:
        from .terms import substitute
        return substitute(self.perm, {R: rcv})

    def __str__(self):
        return "%s | %s | %s" % (self.field, show(self.perm), self.fvf.name)


@dataclass(frozen=True)
class BasicChunk:
    """A predicate instance with its snapshot."""
    pred: str
    args: Tuple[Term, ...]
    snap: Term
    perm: Term

    def __str__(self):
        return "%s(%s) | %s | %s" % (self.pred, ", ".join(show(a) for a in self.args),
                                     show(self.perm), show(self.snap))


Chunk = object   # QuantifiedChunk | BasicChunk


@dataclass(frozen=True)
class Heap:
    """Persistent ordered collection of chunks (insertion order)."""
    chunks: Tuple = ()
    prepend: bool = False       # reversed insertion order (order-independence tests)

    def add(self, ch) -> "Heap":
        if self.prepend:
            return replace(self, chunks=(ch,) + self.chunks)
        return replace(self, chunks=self.chunks + (ch,))

    def field_chunks(self, f: str) -> Tuple[QuantifiedChunk, ...]:
        return tuple(c for c in self.chunks if isinstance(c, QuantifiedChunk) and c.field == f)

    def pred_chunks(self, name: str) -> Tuple[BasicChunk, ...]:
        return tuple(c for c in self.chunks if isinstance(c, BasicChunk) and c.pred == name)

    def replace_chunks(self, mapping: Dict[int, Optional[object]]) -> "Heap":
        """Replace chunks by index (None deletes); order is kept."""
        out = []
        for i, c in enumerate(self.chunks):
            if i in mapping:
                if mapping[i] is not None:
                    out.append(mapping[i])
            else:
                out.append(c)
        return replace(self, chunks=tuple(out))

    def __len__(self):
        return len(self.chunks)

    def dump(self) -> str:
        """One chunk per line: ``field | perm-term | fvf-symbol``."""
        return "\n".join(str(c) for c in self.chunks)


def add_chunk(h: Heap, ch) -> Heap:
    return h.add(ch)


def is_syntactically_empty(perm: Term) -> bool:
    return simplify(perm) == ZERO


def drop_empty_chunks(h: Heap, is_empty=None) -> Heap:
    """Remove chunks without permissions.

    Chunks whose permission simplifies to 0 always go; ``is_empty`` (a solver
    callback) may additionally prove that a chunk grants nothing anywhere.
    """
    drop = {}
    for i, c in enumerate(h.chunks):
        if is_syntactically_empty(c.perm):
            drop[i] = None
        elif is_empty is not None and is_empty(c):
            drop[i] = None
    return h.replace_chunks(drop) if drop else h


@dataclass
class Scope:
    branch: Optional[Term] = None
    terms: List[Term] = field(default_factory=list)
    defs: List[Term] = field(default_factory=list)      # value-map definitions
    memo: Dict = field(default_factory=dict)            # summaries computed in this scope


class PathConditionStack:
    """Scoped path conditions; each scope may carry a branch condition."""

    def __init__(self):
        self.scopes: List[Scope] = [Scope()]

    @property
    def depth(self):
        return len(self.scopes) - 1

    def push(self, branch: Optional[Term] = None):
        self.scopes.append(Scope(branch))

    def pop(self) -> Scope:
        if len(self.scopes) == 1:
            raise RuntimeError("pop at scope depth 0")
        return self.scopes.pop()

    def add(self, t: Term, is_def=False):
        sc = self.scopes[-1]
        (sc.defs if is_def else sc.terms).append(t)

    def lookup(self, key):
        for sc in reversed(self.scopes):
            if key in sc.memo:
                return sc.memo[key]
        return None

    def remember(self, key, value):
        self.scopes[-1].memo[key] = value

    def flatten(self) -> Term:
        """Conjunction of ``branch ==> terms`` over all scopes."""
        from .terms import And, Implies
        out = []
        for sc in self.scopes:
            body = And(*(sc.defs + sc.terms))
            out.append(Implies(sc.branch, body) if sc.branch is not None else body)
        return And(*out)


@dataclass
class SymbolicState:
    heap: Heap
    store: Dict[str, Term]
    olds: Dict[str, Heap] = field(default_factory=dict)

    def copy(self) -> "SymbolicState":
        return SymbolicState(self.heap, dict(self.store), dict(self.olds))

    def capture_old(self, label: str) -> "SymbolicState":
        if label in self.olds:
            raise ValueError("label '%s' already used" % label)
        s = self.copy()
        s.olds[label] = self.heap
        return s
