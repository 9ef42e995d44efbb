"""Datasets, vocabulary and pretrained embeddings.

Canonical on-disk layout for one split ``<name>`` inside a data directory::

    <name>.tsv       sentence_a <TAB> sentence_b <TAB> label   (space-joined tokens)
    <name>.a.conll   CoNLL blocks for sentence_a, same order, blank-line separated
    <name>.b.conll   CoNLL blocks for sentence_b

``prepare_*`` helpers convert common raw distributions to that layout.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .trees import DataError, DependencyTree, format_conll_tree, read_conll_file

log = logging.getLogger(__name__)

EMBED_DIM = 300
OOV_RANGE = 0.05
MSRP_DEV_SEED = 1234

TASKS = {
    # name: (label kind, number of classes, expected split sizes)
    "sick": ("similarity", 5, {"train": 4500, "dev": 500, "test": 4927}),
    "msrp": ("binary", 2, {"train": 3668, "dev": 408, "test": 1725}),
    "ai2": ("binary", 2, {"train": 12689, "dev": 2483, "test": 11359}),
}


def task_kind(task):
    try:
        return TASKS[task][0]
    except KeyError:
        raise DataError(f"unknown task {task!r}; expected one of {sorted(TASKS)}") from None


def num_classes(task):
    task_kind(task)
    return TASKS[task][1]


@dataclass
class DatasetExample:
    tokens_a: list[str]
    tokens_b: list[str]
    tree_a: DependencyTree
    tree_b: DependencyTree
    label: float
    id: str = ""

    def __post_init__(self):
        if not self.tokens_a or not self.tokens_b:
            raise DataError(f"example {self.id!r}: empty sentence")
        for side, toks, tree in (("a", self.tokens_a, self.tree_a), ("b", self.tokens_b, self.tree_b)):
            if len(toks) != len(tree):
                raise DataError(
                    f"example {self.id!r}: sentence {side} has {len(toks)} tokens "
                    f"but its tree has {len(tree)} nodes"
                )


def check_label(label, task):
    kind = task_kind(task)
    if kind == "similarity":
        if not 1.0 <= label <= 5.0:
            raise DataError(f"similarity label {label} outside [1, 5]")
    elif label not in (0.0, 1.0):
        raise DataError(f"binary label {label} not in {{0, 1}}")


def parse_label(text, task):
    t = text.strip().lower()
    if task_kind(task) == "binary":
        mapping = {"0": 0.0, "1": 1.0, "false": 0.0, "true": 1.0}
        if t not in mapping:
            raise DataError(f"binary label {text!r} not one of {sorted(mapping)}")
        return mapping[t]
    try:
        y = float(t)
    except ValueError:
        raise DataError(f"non-numeric similarity label {text!r}") from None
    check_label(y, task)
    return y


# -- vocabulary / embeddings ---------------------------------------------------

class Vocabulary:
    """Lowercased token <-> dense index map."""

    def __init__(self, tokens=()):
        self.itos: list[str] = []
        self.stoi: dict[str, int] = {}
        for t in tokens:
            self.add(t)

    @staticmethod
    def normalize(token):
        return token.lower()

    def add(self, token):
        t = self.normalize(token)
        idx = self.stoi.get(t)
        if idx is None:
            idx = self.stoi[t] = len(self.itos)
            self.itos.append(t)
        return idx

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return self.normalize(token) in self.stoi

    def lookup(self, tokens):
        try:
            return [self.stoi[self.normalize(t)] for t in tokens]
        except KeyError as exc:
            raise DataError(f"token {exc.args[0]!r} not in vocabulary") from None

    def digest(self):
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    @classmethod
    def build(cls, *example_lists):
        v = cls()
        for examples in example_lists:
            for ex in examples:
                for t in ex.tokens_a:
                    v.add(t)
                for t in ex.tokens_b:
                    v.add(t)
        return v


@dataclass
class EmbeddingTable:
    vectors: np.ndarray
    pretrained: np.ndarray  # bool per row

    @property
    def oov_count(self):
        return int((~self.pretrained).sum())

    @property
    def dim(self):
        return self.vectors.shape[1]


def random_embeddings(vocab: Vocabulary, dim=EMBED_DIM, seed=0) -> EmbeddingTable:
    """All rows drawn as OOV rows; used when no pretrained file is available."""
    rng = np.random.default_rng(seed)
    vecs = rng.uniform(-OOV_RANGE, OOV_RANGE, (len(vocab), dim))
    return EmbeddingTable(vecs, np.zeros(len(vocab), dtype=bool))


def load_embeddings(path, vocab: Vocabulary, seed=0, dim=EMBED_DIM) -> EmbeddingTable:
    """Fill rows for vocabulary tokens from a whitespace-separated vector file.

    Only the first occurrence of a (lowercased) token is used. Tokens that
    never appear get uniform(-0.05, 0.05) rows from ``seed``.
    """
    vecs = np.zeros((len(vocab), dim))
    found = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            if len(parts) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected token + {dim} values, got {len(parts) - 1} values")
            idx = vocab.stoi.get(Vocabulary.normalize(parts[0]))
            if idx is None or found[idx]:
                continue
            try:
                row = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector entry") from None
            if not np.all(np.isfinite(row)):
                raise DataError(f"{path}:{lineno}: non-finite vector entry")
            vecs[idx] = row
            found[idx] = True
    rng = np.random.default_rng(seed)
    missing = np.flatnonzero(~found)
    vecs[missing] = rng.uniform(-OOV_RANGE, OOV_RANGE, (missing.size, dim))
    table = EmbeddingTable(vecs, found)
    log.info("embeddings: %d/%d tokens pretrained, %d OOV", found.sum(), len(vocab), table.oov_count)
    return table


def extend_embeddings(table: EmbeddingTable, vocab: Vocabulary, seed=0) -> EmbeddingTable:
    """Grow ``table`` to cover tokens added to ``vocab`` after it was built."""
    extra = len(vocab) - table.vectors.shape[0]
    if extra <= 0:
        return table
    rng = np.random.default_rng(seed)
    rows = rng.uniform(-OOV_RANGE, OOV_RANGE, (extra, table.dim))
    return EmbeddingTable(
        np.vstack([table.vectors, rows]), np.concatenate([table.pretrained, np.zeros(extra, dtype=bool)])
    )


# -- canonical dataset files ---------------------------------------------------

def split_paths(data_dir, name):
    base = os.path.join(data_dir, name)
    return base + ".tsv", base + ".a.conll", base + ".b.conll"


def read_split(data_dir, name, task) -> list[DatasetExample]:
    tsv, conll_a, conll_b = split_paths(data_dir, name)
    for p in (tsv, conll_a, conll_b):
        if not os.path.exists(p):
            raise DataError(f"missing file {p}")
    trees_a = list(read_conll_file(conll_a))
    trees_b = list(read_conll_file(conll_b))
    examples = []
    with open(tsv, encoding="utf-8") as fh:
        rows = [line.rstrip("\n") for line in fh if line.strip()]
    if not (len(rows) == len(trees_a) == len(trees_b)):
        raise DataError(
            f"{name}: {len(rows)} records but {len(trees_a)} / {len(trees_b)} tree blocks"
        )
    for k, row in enumerate(rows):
        cols = row.split("\t")
        if len(cols) not in (3, 4):
            raise DataError(f"{tsv}:{k + 1}: expected 3 tab-separated fields, got {len(cols)}")
        sa, sb, lab = cols[:3]
        ex_id = cols[3] if len(cols) == 4 else f"{name}-{k}"
        try:
            label = parse_label(lab, task)
            ex = DatasetExample(sa.split(), sb.split(), trees_a[k][1], trees_b[k][1], label, ex_id)
        except DataError as exc:
            raise DataError(f"{tsv}:{k + 1}: {exc}") from None
        examples.append(ex)
    return examples


def write_split(data_dir, name, examples):
    os.makedirs(data_dir, exist_ok=True)
    tsv, conll_a, conll_b = split_paths(data_dir, name)
    with open(tsv, "w", encoding="utf-8") as fh:
        for ex in examples:
            lab = f"{ex.label:g}"
            fh.write(f"{' '.join(ex.tokens_a)}\t{' '.join(ex.tokens_b)}\t{lab}\t{ex.id}\n")
    for path, side in ((conll_a, "a"), (conll_b, "b")):
        with open(path, "w", encoding="utf-8") as fh:
            for ex in examples:
                toks = ex.tokens_a if side == "a" else ex.tokens_b
                tree = ex.tree_a if side == "a" else ex.tree_b
                fh.write(format_conll_tree(toks, tree) + "\n\n")


def msrp_dev_split(train, seed=MSRP_DEV_SEED, fraction=0.1):
    """Seeded random dev split: train keeps ``floor((1 - fraction) * n)``, dev gets the rest.

    For MSRP's 4076 pairs this gives 3668 / 408.
    """
    n_dev = len(train) - math.floor((1.0 - fraction) * len(train))
    order = np.random.default_rng(seed).permutation(len(train))
    dev_idx = set(order[:n_dev].tolist())
    dev = [ex for i, ex in enumerate(train) if i in dev_idx]
    rest = [ex for i, ex in enumerate(train) if i not in dev_idx]
    return rest, dev


@dataclass
class Splits:
    train: list
    dev: list
    test: list
    warnings: list = field(default_factory=list)


def load_dataset(task, data_dir, seed=MSRP_DEV_SEED) -> Splits:
    """Load train/dev/test for ``task`` from the canonical layout.

    MSRP ships without a dev split; when ``dev.tsv`` is absent a seeded 10%
    of train becomes dev. Split sizes that differ from the published counts
    are logged as warnings, not errors.
    """
    task_kind(task)
    train = read_split(data_dir, "train", task)
    if task == "msrp" and not os.path.exists(split_paths(data_dir, "dev")[0]):
        train, dev = msrp_dev_split(train, seed)
    else:
        dev = read_split(data_dir, "dev", task)
    test = read_split(data_dir, "test", task)
    splits = Splits(train, dev, test)
    expected = TASKS[task][2]
    for name in ("train", "dev", "test"):
        got = len(getattr(splits, name))
        if got != expected[name]:
            msg = f"{task} {name}: {got} examples (published split has {expected[name]})"
            splits.warnings.append(msg)
            log.warning(msg)
    return splits


# -- raw corpus conversion -----------------------------------------------------

def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def prepare_parents_dir(src_dir, out_dir, name, task, label_file=None):
    """Convert a ``a.toks / b.toks / a.parents / b.parents / sim.txt`` directory.

    ``.parents`` lines hold 1-based head indices (0 = root), one line per
    sentence; this is the layout produced by common Tree-LSTM preprocessing
    scripts. ``label_file`` defaults to ``sim.txt`` for similarity tasks and
    ``labels.txt`` otherwise.
    """
    if label_file is None:
        label_file = "sim.txt" if task_kind(task) == "similarity" else "labels.txt"
    toks_a = _read_lines(os.path.join(src_dir, "a.toks"))
    toks_b = _read_lines(os.path.join(src_dir, "b.toks"))
    par_a = _read_lines(os.path.join(src_dir, "a.parents"))
    par_b = _read_lines(os.path.join(src_dir, "b.parents"))
    labels = _read_lines(os.path.join(src_dir, label_file))
    ids_path = os.path.join(src_dir, "id.txt")
    ids = _read_lines(ids_path) if os.path.exists(ids_path) else None
    n = len(labels)
    if not (len(toks_a) == len(toks_b) == len(par_a) == len(par_b) == n):
        raise DataError(f"{src_dir}: file lengths disagree")
    examples = []
    for k in range(n):
        try:
            ta = DependencyTree.from_parents(int(p) for p in par_a[k].split())
            tb = DependencyTree.from_parents(int(p) for p in par_b[k].split())
            ex = DatasetExample(
                toks_a[k].split(), toks_b[k].split(), ta, tb, parse_label(labels[k], task),
                ids[k] if ids else f"{name}-{k}",
            )
        except (DataError, ValueError) as exc:
            raise DataError(f"{src_dir} record {k + 1}: {exc}") from None
        examples.append(ex)
    write_split(out_dir, name, examples)
    return examples


def _attach_trees(records, conll_a, conll_b, name, task):
    trees_a = list(read_conll_file(conll_a))
    trees_b = list(read_conll_file(conll_b))
    if not (len(records) == len(trees_a) == len(trees_b)):
        raise DataError(f"{name}: {len(records)} records but {len(trees_a)} / {len(trees_b)} parses")
    out = []
    for (rid, label), (ta_tok, ta), (tb_tok, tb) in zip(records, trees_a, trees_b):
        out.append(DatasetExample(ta_tok, tb_tok, ta, tb, parse_label(label, task), rid))
    return out


def prepare_sick(sick_txt, conll_a, conll_b, out_dir):
    """Split the SICK release file by its SemEval_set column.

    ``conll_a`` / ``conll_b`` hold parses of sentence_A / sentence_B for every
    row of ``sick_txt`` in file order (TRIAL rows become dev).
    """
    lines = _read_lines(sick_txt)
    header = lines[0].split("\t")
    try:
        col_id = header.index("pair_ID")
        col_score = header.index("relatedness_score")
        col_set = header.index("SemEval_set")
    except ValueError:
        raise DataError(f"{sick_txt}: unexpected header {header}") from None
    records, sets = [], []
    for line in lines[1:]:
        if not line.strip():
            continue
        cols = line.split("\t")
        records.append((cols[col_id], cols[col_score]))
        sets.append(cols[col_set].strip().upper())
    examples = _attach_trees(records, conll_a, conll_b, "sick", "sick")
    names = {"TRAIN": "train", "TRIAL": "dev", "TEST": "test"}
    out = {}
    for split_name in names.values():
        out[split_name] = [ex for ex, s in zip(examples, sets) if names.get(s) == split_name]
        write_split(out_dir, split_name, out[split_name])
    return out


def prepare_msrp(msrp_txt, conll_a, conll_b, out_dir, name):
    """Convert ``msr_paraphrase_{train,test}.txt`` (Quality, #1 ID, #2 ID, #1 String, #2 String)."""
    lines = _read_lines(msrp_txt)
    records = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) < 5:
            raise DataError(f"{msrp_txt}: expected 5 columns, got {len(cols)}")
        records.append((f"{cols[1]}-{cols[2]}", cols[0]))
    examples = _attach_trees(records, conll_a, conll_b, name, "msrp")
    write_split(out_dir, name, examples)
    return examples


def prepare_tsv(tsv, conll_a, conll_b, out_dir, name, task, label_col=0):
    """Generic ``label <TAB> sentence_a <TAB> sentence_b`` (or any order via ``label_col``)."""
    records = []
    for k, line in enumerate(_read_lines(tsv)):
        if not line.strip():
            continue
        cols = line.split("\t")
        records.append((f"{name}-{k}", cols[label_col]))
    examples = _attach_trees(records, conll_a, conll_b, name, task)
    write_split(out_dir, name, examples)
    return examples
