"""Dependency trees over token positions, and CoNLL-style reading/writing."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator


class DataError(ValueError):
    """Malformed input data (dataset, tree or embedding file)."""


class TreeError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class DependencyTree:
    """Rooted tree with one node per token.

    ``heads[i]`` is the parent token index of token ``i`` (0-based), ``-1``
    for the root. Children are kept in token order.
    """

    heads: list[int]
    children: list[list[int]] = field(init=False, repr=False)
    root: int = field(init=False)

    def __post_init__(self):
        self.heads = list(self.heads)
        self.children, self.root = _validate(self.heads)

    def __len__(self):
        return len(self.heads)

    def postorder(self) -> list[int]:
        """Children before parents; siblings in token order."""
        out = []
        stack = [(self.root, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            stack.append((node, True))
            for c in reversed(self.children[node]):
                stack.append((c, False))
        return out

    def depth(self) -> int:
        d = [0] * len(self)
        for n in self.postorder():
            d[n] = 1 + max((d[c] for c in self.children[n]), default=-1)
        return d[self.root]

    @classmethod
    def from_parents(cls, parents: Iterable[int]) -> "DependencyTree":
        """Build from 1-based head indices with 0 for the root."""
        return cls([p - 1 for p in parents])


def _validate(heads, lines=None):
    n = len(heads)
    if n == 0:
        raise TreeError("empty tree")

    def where(i):
        return lines[i] if lines else None

    children = [[] for _ in range(n)]
    roots = []
    for i, h in enumerate(heads):
        if h == -1:
            roots.append(i)
        elif 0 <= h < n and h != i:
            children[h].append(i)
        elif h == i:
            raise TreeError(f"token {i + 1} is its own head", where(i))
        else:
            raise TreeError(f"head {h + 1} of token {i + 1} out of range 0..{n}", where(i))
    if len(roots) > 1:
        raise TreeError(
            "multiple roots: tokens " + ", ".join(str(r + 1) for r in roots), where(roots[1])
        )
    # every node must reach the root by following heads; with no root at all
    # the head graph necessarily contains a cycle
    state = [0] * n  # 0 unvisited, 1 on path, 2 reaches root
    if roots:
        state[roots[0]] = 2
    for start in range(n):
        path = []
        i = start
        while state[i] == 0:
            state[i] = 1
            path.append(i)
            i = heads[i]
        if state[i] == 1:
            prefix = "" if roots else "no root (no token with HEAD 0); "
            raise TreeError(f"{prefix}cycle through token {i + 1}", where(i))
        for p in path:
            state[p] = 2
    return children, roots[0]


def parse_conll_tree(lines: str | Iterable[str], first_line: int = 1):
    """Parse one CoNLL-style block into ``(tokens, tree)``.

    Lines need at least ID, FORM and HEAD. With three columns HEAD is the
    third; with seven or more (CoNLL-X / CoNLL-U) it is the seventh.
    Comment lines, multiword ranges (``1-2``) and empty nodes (``1.1``) are
    skipped. Errors carry the line number counted from ``first_line``.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    tokens, heads, where = [], [], []
    for lineno, raw in enumerate(lines, start=first_line):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cols = line.split("\t") if "\t" in line else line.split()
        if len(cols) < 3:
            raise TreeError(f"expected at least 3 columns (ID FORM HEAD), got {len(cols)}", lineno)
        if "-" in cols[0] or "." in cols[0]:
            continue
        head_col = 6 if len(cols) >= 7 else 2
        try:
            tid = int(cols[0])
            head = int(cols[head_col])
        except ValueError:
            raise TreeError(f"non-integer ID or HEAD in {line!r}", lineno) from None
        if tid != len(tokens) + 1:
            raise TreeError(f"expected token ID {len(tokens) + 1}, got {tid}", lineno)
        tokens.append(cols[1])
        heads.append(head - 1)
        where.append(lineno)
    if not tokens:
        raise TreeError("empty block", first_line)
    tree = DependencyTree.__new__(DependencyTree)
    tree.heads = heads
    tree.children, tree.root = _validate(heads, where)
    return tokens, tree


def format_conll_tree(tokens, tree: DependencyTree) -> str:
    """Ten-column CoNLL-X block (unused columns are ``_``), no trailing blank line."""
    if len(tokens) != len(tree):
        raise TreeError(f"{len(tokens)} tokens but {len(tree)} tree nodes")
    rows = []
    for i, (tok, h) in enumerate(zip(tokens, tree.heads)):
        rows.append("\t".join([str(i + 1), tok, "_", "_", "_", "_", str(h + 1), "_", "_", "_"]))
    return "\n".join(rows)


def read_conll_file(path) -> Iterator[tuple[list[str], DependencyTree]]:
    """Yield ``(tokens, tree)`` for each blank-line separated block."""
    block, start = [], 1
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                if not block:
                    start = lineno
                block.append(line)
            elif block:
                yield parse_conll_tree(block, start)
                block = []
    if block:
        yield parse_conll_tree(block, start)


def write_conll_file(path, items):
    with open(path, "w", encoding="utf-8") as fh:
        for tokens, tree in items:
            fh.write(format_conll_tree(tokens, tree))
            fh.write("\n\n")
