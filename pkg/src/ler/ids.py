"""Ideographic description sequences: radical-composition trees and their
pre-order encodings.

A character is either a single radical or a spatial operator applied to
exactly arity subtrees. Pre-order sequences over fixed arities are
prefix-free, so every valid sequence parses to exactly one tree. Labels
append an end marker and pad to a fixed length with the pad symbol.
"""

import numpy as np

# Unicode ideographic description characters and their arities, for real
# decomposition tables. The desk-scale vocabulary is procedural.
IDC_ARITIES = {
    "⿰": 2, "⿱": 2, "⿲": 3, "⿳": 3, "⿴": 2,
    "⿵": 2, "⿶": 2, "⿷": 2, "⿸": 2, "⿹": 2,
    "⿺": 2, "⿻": 2,
}

DESK_OPERATORS = [("lr", 2), ("tb", 2), ("sur", 2)]
DESK_RADICALS = ["bar_h", "bar_v", "cross", "corner", "diag", "box", "tee", "dots"]


class ParseError(ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class IdsVocab:
    """Symbol table: operators first, then radicals, then pad and end."""

    def __init__(self, operators, radicals):
        names = [n for n, _ in operators] + list(radicals)
        if len(set(names)) != len(names):
            raise ValueError("duplicate symbol names in vocab")
        self.operators = list(operators)
        self.radicals = list(radicals)
        self.names = names + ["<ipad>", "<iend>"]
        self.ids = {n: i for i, n in enumerate(self.names)}
        self.arities = {i: a for i, (_, a) in enumerate(operators)}
        self.n_ops = len(operators)
        self.n_rad = len(radicals)
        self.pad_id = self.n_ops + self.n_rad
        self.end_id = self.pad_id + 1

    @property
    def n_ids(self):
        return len(self.names)

    def is_operator(self, sym):
        return sym < self.n_ops

    def is_radical(self, sym):
        return self.n_ops <= sym < self.pad_id

    def radical_ids(self):
        return list(range(self.n_ops, self.pad_id))

    def name(self, sym):
        return self.names[sym]

    def id_of(self, name):
        if name not in self.ids:
            raise KeyError(f"unknown symbol {name!r}")
        return self.ids[name]

    @classmethod
    def desk_default(cls):
        return cls(DESK_OPERATORS, DESK_RADICALS)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for name, arity in self.operators:
                f.write(f"operator {name} {arity}\n")
            for name in self.radicals:
                f.write(f"radical {name}\n")

    @classmethod
    def load(cls, path):
        ops, rads = [], []
        with open(path, encoding="utf-8") as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if parts[0] == "operator" and len(parts) == 3:
                    arity = int(parts[2])
                    if arity not in (2, 3):
                        raise ValueError(f"{path}:{ln}: operator arity must be 2 or 3")
                    ops.append((parts[1], arity))
                elif parts[0] == "radical" and len(parts) == 2:
                    rads.append(parts[1])
                else:
                    raise ValueError(f"{path}:{ln}: bad vocab line {line!r}")
        return cls(ops, rads)

    @classmethod
    def from_decomposition_table(cls, path):
        """Derive a vocab from a <char>\\t<symbols...> table; symbols that are
        ideographic description characters become operators."""
        ops, rads, seen = [], [], set()
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.rstrip("\n")
                if not line or line.startswith("#"):
                    continue
                _, _, rest = line.partition("\t")
                for sym in rest.split():
                    if sym in seen:
                        continue
                    seen.add(sym)
                    if sym in IDC_ARITIES:
                        ops.append((sym, IDC_ARITIES[sym]))
                    else:
                        rads.append(sym)
        return cls(sorted(ops), sorted(rads))


class IdsTree:
    """Operator node with children, or a radical leaf (no children)."""

    __slots__ = ("symbol", "children")

    def __init__(self, symbol, children=()):
        self.symbol = symbol
        self.children = tuple(children)

    def __eq__(self, other):
        return (isinstance(other, IdsTree) and self.symbol == other.symbol
                and self.children == other.children)

    def __hash__(self):
        return hash((self.symbol, self.children))

    def __repr__(self):
        return f"IdsTree({self.symbol}, {self.children!r})"

    def depth(self):
        if not self.children:
            return 0
        return 1 + max(c.depth() for c in self.children)

    def to_string(self, vocab):
        if not self.children:
            return vocab.name(self.symbol)
        inner = ", ".join(c.to_string(vocab) for c in self.children)
        return f"{vocab.name(self.symbol)}({inner})"


def flatten(tree, vocab, l_ids=None, max_depth=None):
    """Pre-order symbol ids, then end, then pads up to l_ids if given."""
    if max_depth is not None and tree.depth() > max_depth:
        raise ValueError(f"tree depth {tree.depth()} exceeds max depth {max_depth}")
    out = []

    def walk(node):
        out.append(node.symbol)
        if vocab.is_operator(node.symbol):
            if len(node.children) != vocab.arities[node.symbol]:
                raise ValueError(f"operator {vocab.name(node.symbol)} has "
                                 f"{len(node.children)} children, needs {vocab.arities[node.symbol]}")
        elif node.children:
            raise ValueError(f"radical {vocab.name(node.symbol)} cannot have children")
        for c in node.children:
            walk(c)

    walk(tree)
    out.append(vocab.end_id)
    if l_ids is not None:
        if len(out) > l_ids:
            raise ValueError(f"sequence length {len(out)} exceeds l_ids {l_ids}")
        out.extend([vocab.pad_id] * (l_ids - len(out)))
    return out


def parse(seq, vocab):
    """Rebuild the unique tree for a pre-order sequence.

    The end marker is optional when the sequence is exactly consumed;
    pads may only follow it. Errors carry the offending position.
    """
    seq = list(seq)
    if not seq:
        raise ParseError("empty sequence", 0)
    root = None
    stack = []  # (operator symbol, wanted, children)
    ended = False
    for i, sym in enumerate(seq):
        if not 0 <= sym < vocab.n_ids:
            raise ParseError(f"unknown symbol id {sym}", i)
        if sym == vocab.pad_id:
            if not ended:
                raise ParseError("pad before end marker", i)
            continue
        if sym == vocab.end_id:
            if root is None:
                raise ParseError("truncated: operator is missing children" if stack
                                 else "end marker with no tree", i)
            if ended:
                raise ParseError("duplicate end marker", i)
            ended = True
            continue
        if ended or root is not None:
            raise ParseError(f"trailing symbol {vocab.name(sym)!r} after complete tree", i)
        node = IdsTree(sym)
        if vocab.is_operator(sym):
            stack.append((sym, vocab.arities[sym], [node]))
            continue
        # a radical closes frames as they fill
        while True:
            if not stack:
                root = node
                break
            op_sym, wanted, group = stack[-1]
            group[0].children += (node,)
            if len(group[0].children) == wanted:
                stack.pop()
                node = group[0]
                continue
            break
    if root is None:
        raise ParseError("truncated: operator is missing children", len(seq))
    return root


def count_trees(vocab, max_depth):
    """Number of distinct trees of depth <= max_depth."""
    c = vocab.n_rad
    for _ in range(max_depth):
        c = vocab.n_rad + sum(c ** a for _, a in vocab.operators)
    return c


def random_tree(rng, vocab, max_depth, p_leaf=0.35):
    if max_depth == 0 or rng.random() < p_leaf:
        return IdsTree(int(rng.choice(vocab.radical_ids())))
    op = int(rng.integers(vocab.n_ops))
    kids = [random_tree(rng, vocab, max_depth - 1, p_leaf)
            for _ in range(vocab.arities[op])]
    return IdsTree(op, kids)


def enumerate_charset(vocab, max_depth, max_count, seed):
    """Deterministic duplicate-free list of max_count distinct trees."""
    if max_count < 1:
        raise ValueError("max_count must be >= 1")
    total = count_trees(vocab, max_depth)
    if max_count > total:
        raise ValueError(f"vocab yields only {total} distinct trees at depth "
                         f"{max_depth}, cannot produce {max_count}")
    rng = np.random.Generator(np.random.Philox(
        key=np.array([seed & 0xFFFFFFFFFFFFFFFF, 0x1D5], dtype=np.uint64)))
    if max_count > total // 2 and total <= 500_000:
        trees = _enumerate_all(vocab, max_depth)
        order = rng.permutation(len(trees))
        return [trees[i] for i in order[:max_count]]
    chosen, seen = [], set()
    attempts = 0
    while len(chosen) < max_count:
        t = random_tree(rng, vocab, max_depth)
        key = tuple(flatten(t, vocab))
        attempts += 1
        if key not in seen:
            seen.add(key)
            chosen.append(t)
        if attempts > 1000 * max_count:  # dense request, switch to exhaustive
            trees = _enumerate_all(vocab, max_depth)
            order = rng.permutation(len(trees))
            return [trees[i] for i in order[:max_count]]
    return chosen


def _enumerate_all(vocab, max_depth):
    out = [IdsTree(r) for r in vocab.radical_ids()]
    for _ in range(max_depth):
        nxt = []
        for op in range(vocab.n_ops):
            arity = vocab.arities[op]
            stack = [()]
            for _ in range(arity):
                stack = [c + (t,) for c in stack for t in out]
            nxt.extend(IdsTree(op, kids) for kids in stack)
        existing = {tuple(flatten(t, vocab)) for t in out}
        out.extend(t for t in nxt if tuple(flatten(t, vocab)) not in existing)
    return out


def parse_tree_string(s, vocab):
    """Inverse of IdsTree.to_string: 'lr(bar_h, box)' -> tree."""
    pos = 0

    def skip_ws():
        nonlocal pos
        while pos < len(s) and s[pos] in " \t":
            pos += 1

    def token():
        nonlocal pos
        skip_ws()
        start = pos
        while pos < len(s) and s[pos] not in "(), \t":
            pos += 1
        if start == pos:
            raise ParseError("expected a symbol name", start)
        return s[start:pos]

    def node():
        nonlocal pos
        name = token()
        if name not in vocab.ids:
            raise ParseError(f"unknown symbol {name!r}", pos - len(name))
        sym = vocab.ids[name]
        skip_ws()
        if pos < len(s) and s[pos] == "(":
            if not vocab.is_operator(sym):
                raise ParseError(f"{name!r} is not an operator", pos)
            pos += 1
            kids = [node()]
            skip_ws()
            while pos < len(s) and s[pos] == ",":
                pos += 1
                kids.append(node())
                skip_ws()
            if pos >= len(s) or s[pos] != ")":
                raise ParseError("expected ')'", pos)
            pos += 1
            if len(kids) != vocab.arities[sym]:
                raise ParseError(f"{name!r} takes {vocab.arities[sym]} children, got {len(kids)}", pos)
            return IdsTree(sym, kids)
        if vocab.is_operator(sym):
            raise ParseError(f"operator {name!r} needs children", pos)
        return IdsTree(sym)

    t = node()
    skip_ws()
    if pos != len(s):
        raise ParseError("trailing characters after tree", pos)
    return t
