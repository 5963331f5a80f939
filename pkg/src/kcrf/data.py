"""Plain-text sequence files.

One position per line, ``label<TAB>f1<TAB>f2...``; a blank line ends a
sequence.  The label ``?`` marks an unlabeled position (prediction input).
"""
from dataclasses import dataclass, field

import numpy as np

from .chain import LabelAlphabet, LabeledSequence
from .exceptions import EmptyDatasetError, ParseError, SchemaError

UNLABELED = "?"


@dataclass
class Dataset:
    sequences: list
    alphabet: LabelAlphabet
    feature_dim: int
    # one entry per input line: (sequence index, position) or None for blank lines
    layout: list = field(default_factory=list)
    empty_blocks: int = 0

    def __len__(self):
        return len(self.sequences)

    @property
    def is_labeled(self):
        return all(s.is_labeled for s in self.sequences)

    def subset(self, indices):
        return Dataset([self.sequences[i] for i in indices], self.alphabet, self.feature_dim)


def parse_lines(lines, alphabet=None, source="<input>"):
    """Parse sequence-format lines.

    With ``alphabet`` given, labels must belong to it; otherwise the alphabet
    is built from labels in order of first appearance.
    """
    names = list(alphabet.names) if alphabet is not None else []
    blocks, current, layout = [], [], []
    empty_blocks = 0
    prev_blank = True
    feature_dim = None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            layout.append(None)
            if current:
                blocks.append(current)
                current = []
            elif prev_blank:
                empty_blocks += 1
            prev_blank = True
            continue
        prev_blank = False
        parts = line.split("\t")
        if len(parts) < 2:
            raise ParseError(f"{source}: expected a label and at least one feature", lineno)
        label = parts[0].strip()
        try:
            feats = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError(f"{source}: non-numeric feature in {line!r}", lineno) from None
        if not np.isfinite(feats).all():
            raise ParseError(f"{source}: non-finite feature", lineno)
        if feature_dim is None:
            feature_dim = len(feats)
        elif len(feats) != feature_dim:
            raise SchemaError(
                f"{source}: {len(feats)} features, expected {feature_dim}", lineno)
        if label != UNLABELED and label not in names:
            if alphabet is not None:
                raise ParseError(f"{source}: label {label!r} not in model alphabet", lineno)
            names.append(label)
        layout.append((len(blocks), len(current)))
        current.append((lineno, label, feats))
    if current:
        blocks.append(current)
    if not blocks:
        raise EmptyDatasetError(f"{source}: no sequences found")

    if alphabet is None:
        alphabet = LabelAlphabet(names or [UNLABELED])
    sequences = []
    for i, block in enumerate(blocks):
        labels = [b[1] for b in block]
        unlabeled = [lab == UNLABELED for lab in labels]
        if any(unlabeled) and not all(unlabeled):
            raise ParseError(f"{source}: sequence mixes '?' with labels", block[0][0])
        X = np.array([b[2] for b in block], dtype=float)
        y = None if all(unlabeled) else alphabet.encode(labels)
        sequences.append(LabeledSequence(X, y, id=i))
    return Dataset(sequences, alphabet, feature_dim, layout, empty_blocks)


def load_dataset(path, alphabet=None):
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, alphabet, source=str(path))


def format_sequences(sequences, alphabet):
    """Serialize labeled sequences back to the text format."""
    out = []
    for seq in sequences:
        for t in range(seq.length):
            label = alphabet.names[seq.labels[t]] if seq.is_labeled else UNLABELED
            out.append("\t".join([label] + [repr(float(v)) for v in seq.features[t]]))
        out.append("")
    return "\n".join(out) + "\n"
