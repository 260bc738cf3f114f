"""Embedding, bi-directional GRU encoding, and span-contextual query vectors.

A span's query vector is built from the forward state just left of the span
and the backward state just right of it, projected by a matrix initialized to
near-[I; I] so it starts out as (roughly) the sum of the two boundary states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .exceptions import ConfigError


@dataclass
class Document:
    """A token-id sequence with its raw-token sidecar.

    `placeholder_pos` is the 1-based position of the cloze placeholder, when
    the document is a query.
    """
    symbols: list[int]
    raw_tokens: list[str]
    placeholder_pos: int | None = None

    def __post_init__(self):
        if len(self.symbols) != len(self.raw_tokens):
            raise ValueError("symbols and raw_tokens lengths differ")

    def __len__(self):
        return len(self.symbols)


@dataclass(frozen=True)
class Span:
    """1-based inclusive span [l_s, l_e]."""
    l_s: int
    l_e: int

    def __post_init__(self):
        if not 1 <= self.l_s <= self.l_e:
            raise ValueError(f"invalid span ({self.l_s}, {self.l_e})")


@dataclass
class GRUParams:
    """One direction of the encoder. `b_z` is the update-gate bias."""
    W_z: Tensor
    U_z: Tensor
    b_z: Tensor
    W_r: Tensor
    U_r: Tensor
    b_r: Tensor
    W_h: Tensor
    U_h: Tensor
    b_h: Tensor

    def named(self, prefix: str):
        for f in ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h",
                  "b_h"):
            yield f"{prefix}.{f}", getattr(self, f)


@dataclass
class EncoderStates:
    """fwd[l] = forward state after reading position l (fwd[0] = zero init);
    bwd[l] = backward state after reading position l right-to-left
    (bwd[n+1] = zero init). Lists are indexed directly by l."""
    fwd: list
    bwd: list

    @property
    def n(self) -> int:
        return len(self.fwd) - 1


def gru_step(xz: Tensor, xr: Tensor, xh: Tensor, l: int, h_prev: Tensor,
             p: GRUParams) -> Tensor:
    """One recurrence step as a single fused tape node.

    `xz`, `xr`, `xh` are the whole-sequence input projections; row `l` feeds
    this step. Update gate z keeps the old state, reset gate r masks the old
    state inside the candidate.
    """
    hp = h_prev.data
    z = ag.stable_sigmoid(xz.data[l] + p.U_z.data @ hp + p.b_z.data)
    r = ag.stable_sigmoid(xr.data[l] + p.U_r.data @ hp + p.b_r.data)
    rh = r * hp
    c = np.tanh(xh.data[l] + p.U_h.data @ rh + p.b_h.data)
    out = Tensor(z * hp + (1.0 - z) * c,
                 parents=(xz, xr, xh, h_prev, p.U_z, p.U_r, p.U_h,
                          p.b_z, p.b_r, p.b_h))

    def bw(g):
        dz = g * (hp - c)
        da_c = (g * (1.0 - z)) * (1.0 - c * c)
        da_z = dz * z * (1.0 - z)
        drh = p.U_h.data.T @ da_c
        da_r = (drh * hp) * r * (1.0 - r)
        h_prev.grad += (g * z + drh * r
                        + p.U_z.data.T @ da_z + p.U_r.data.T @ da_r)
        xz.grad[l] += da_z
        xr.grad[l] += da_r
        xh.grad[l] += da_c
        p.U_z.grad += np.outer(da_z, hp)
        p.U_r.grad += np.outer(da_r, hp)
        p.U_h.grad += np.outer(da_c, rh)
        p.b_z.grad += da_z
        p.b_r.grad += da_r
        p.b_h.grad += da_c
    out.backward_fn = bw
    return out


def _gru_direction(embedded: Tensor, p: GRUParams, positions) -> list[Tensor]:
    h_dim = p.U_z.data.shape[0]
    xz = ag.matmul(embedded, p.W_z)
    xr = ag.matmul(embedded, p.W_r)
    xh = ag.matmul(embedded, p.W_h)
    h = ag.zeros(h_dim)
    states = []
    for l in positions:
        h = gru_step(xz, xr, xh, l, h, p)
        states.append(h)
    return states


def bigru_encode(embedded: Tensor, fwd_params: GRUParams,
                 bwd_params: GRUParams) -> EncoderStates:
    """Run both directions over an embedded sequence (one row per position)."""
    n = embedded.data.shape[0]
    if n < 1:
        raise ValueError("cannot encode an empty sequence")
    h_dim = fwd_params.U_z.data.shape[0]
    fwd_states = _gru_direction(embedded, fwd_params, range(n))
    bwd_states = _gru_direction(embedded, bwd_params, range(n - 1, -1, -1))
    bwd_states.reverse()
    fwd = [ag.zeros(h_dim)] + fwd_states
    bwd = [None] + bwd_states + [ag.zeros(h_dim)]
    return EncoderStates(fwd=fwd, bwd=bwd)


def embed_sequence(doc: Document, e_i: Tensor, dropout_rate: float,
                   mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Look up input embeddings; in train mode apply inverted dropout."""
    if not 0.0 <= dropout_rate < 1.0:
        raise ConfigError(f"dropout rate {dropout_rate} not in [0, 1)")
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mode {mode!r}")
    emb = ag.gather_rows(e_i, doc.symbols)
    if mode == "train" and dropout_rate > 0.0:
        if rng is None:
            raise ConfigError("train-mode dropout requires an rng")
        keep = (rng.random(emb.data.shape) >= dropout_rate)
        mask = keep.astype(emb.data.dtype) / (1.0 - dropout_rate)
        emb = ag.mul(emb, ag.constant(mask))
    return emb


def encode_span_query(states: EncoderStates, span: Span, w_q: Tensor) -> Tensor:
    """Project [h^f_{l_s-1}; h^b_{l_e+1}] — outer context only."""
    if span.l_e > states.n:
        raise IndexError(f"span ({span.l_s}, {span.l_e}) exceeds sequence "
                         f"length {states.n}")
    outer = ag.concat([states.fwd[span.l_s - 1], states.bwd[span.l_e + 1]])
    return ag.matmul(w_q, outer)


def init_wq(h: int, rng: np.random.Generator,
            noise_std: float = 0.1) -> np.ndarray:
    """[I_h ; I_h] stacked horizontally, plus Gaussian noise."""
    if h < 1:
        raise ValueError("h must be positive")
    base = np.concatenate([np.eye(h), np.eye(h)], axis=1)
    return base + rng.normal(0.0, noise_std, size=(h, 2 * h))


def embed_answer(symbol_id: int, e_i: Tensor, e_o: Tensor,
                 answer_row: int) -> tuple[Tensor, Tensor]:
    """Input embedding (query-update path) and output embedding (answer path)
    of one answer symbol; `answer_row` indexes the answer-symbol table."""
    return ag.take_row(e_i, symbol_id), ag.take_row(e_o, answer_row)
