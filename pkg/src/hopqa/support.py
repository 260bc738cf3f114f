"""Spans-of-interest and construction of the supporting (z, y) memory set.

Each occurrence of an answer candidate in the document becomes one support
pair: a cloze query built from the occurrence's outer context plus the
occurrence itself as the answer. The document and the query are encoded in a
single pass, joined by a separator symbol, so the support pairs and the
encoded query share one bi-GRU run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import (Document, Span, bigru_encode, embed_answer,
                      embed_sequence, encode_span_query)
from .exceptions import EmptySupportError
from .model import ModelParams


@dataclass
class SupportPair:
    span: Span
    answer_symbol: int
    z: Tensor
    y_i: Tensor
    y_o: Tensor


@dataclass
class SupportSet:
    pairs: list[SupportPair]
    candidates: list[int]
    query_z: Tensor

    @property
    def m(self) -> int:
        return len(self.pairs)


@dataclass
class Example:
    document: Document
    query: Document
    gold: int
    candidates: list[int]

    def __post_init__(self):
        if self.gold not in self.candidates:
            raise ValueError("gold symbol missing from candidate set")
        if self.query.placeholder_pos is None:
            raise ValueError("query has no placeholder position")


def extract_sois(doc: Document, candidates) -> list[Span]:
    """One single-token span per candidate occurrence, in document order."""
    cand = set(candidates)
    return [Span(l, l) for l, sym in enumerate(doc.symbols, start=1)
            if sym in cand]


def build_support(example: Example, params: ModelParams, *, sep_id: int,
                  answer_row, dropout_rate: float = 0.0, mode: str = "eval",
                  rng: np.random.Generator | None = None) -> SupportSet:
    """Encode document + separator + query once; materialize all support
    pairs and the initial query vector.

    `answer_row` maps a vocab id to its row in the answer-symbol table.
    """
    doc, query = example.document, example.query
    full = Document(
        symbols=doc.symbols + [sep_id] + query.symbols,
        raw_tokens=doc.raw_tokens + ["@sep"] + query.raw_tokens,
    )
    emb = embed_sequence(full, params.E_i, dropout_rate, mode, rng)
    states = bigru_encode(emb, params.gru_f, params.gru_b)

    pairs = []
    for span in extract_sois(doc, example.candidates):
        sym = doc.symbols[span.l_s - 1]
        y_i, y_o = embed_answer(sym, params.E_i, params.E_o, answer_row(sym))
        pairs.append(SupportPair(
            span=span, answer_symbol=sym,
            z=encode_span_query(states, span, params.W_q),
            y_i=y_i, y_o=y_o))

    q_pos = len(doc) + 1 + query.placeholder_pos
    query_z = encode_span_query(states, Span(q_pos, q_pos), params.W_q)
    return SupportSet(pairs=pairs, candidates=list(example.candidates),
                      query_z=query_z)


def stacked(support: SupportSet) -> tuple[Tensor, Tensor, Tensor]:
    """Support pairs as matrices: Z, Y_i, Y_o (one pair per row)."""
    if support.m == 0:
        raise EmptySupportError("support set is empty")
    z = ag.stack_rows([p.z for p in support.pairs])
    y_i = ag.stack_rows([p.y_i for p in support.pairs])
    y_o = ag.stack_rows([p.y_o for p in support.pairs])
    return z, y_i, y_o
