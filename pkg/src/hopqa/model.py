"""All trainable tensors of the model, with their initialization rules.

Embeddings: Gaussian(0, 0.1). Matrices: Glorot uniform. Biases: zero, except
the GRU update-gate bias which starts at 1. The span-query projection starts
at [I; I] plus noise. The output-embedding table can be frozen to the
identity (attention-sum scoring mode).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import GRUParams, init_wq


def glorot(rng: np.random.Generator, shape) -> np.ndarray:
    fan_in, fan_out = shape[-1], shape[0] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class ModelParams:
    h: int
    vocab_size: int
    n_answers: int
    identity_eo: bool
    E_i: Tensor
    E_o: Tensor
    gru_f: GRUParams
    gru_b: GRUParams
    W_q: Tensor
    U_q_c: Tensor
    U_q_g: Tensor
    b_q_g: Tensor
    U_a_q: Tensor
    g_a_q: Tensor
    u_a_g: Tensor
    b_a: Tensor

    @property
    def answer_dim(self) -> int:
        """Dimension of the running answer representation."""
        return self.n_answers if self.identity_eo else self.h

    def named(self):
        """All parameter tensors, frozen ones included."""
        yield "E_i", self.E_i
        yield "E_o", self.E_o
        yield from self.gru_f.named("gru_f")
        yield from self.gru_b.named("gru_b")
        for name in ("W_q", "U_q_c", "U_q_g", "b_q_g", "U_a_q", "g_a_q",
                     "u_a_g", "b_a"):
            yield name, getattr(self, name)

    def trainable(self):
        for name, t in self.named():
            if self.identity_eo and name == "E_o":
                continue
            yield name, t

    def get(self, name: str) -> Tensor:
        for n, t in self.named():
            if n == name:
                return t
        raise KeyError(name)


def _init_gru(h: int, rng: np.random.Generator, prefix: str) -> GRUParams:
    def mat(name):
        return ag.param(glorot(rng, (h, h)), name=f"{prefix}.{name}")

    return GRUParams(
        W_z=mat("W_z"), U_z=mat("U_z"),
        b_z=ag.param(np.ones(h), name=f"{prefix}.b_z"),
        W_r=mat("W_r"), U_r=mat("U_r"),
        b_r=ag.param(np.zeros(h), name=f"{prefix}.b_r"),
        W_h=mat("W_h"), U_h=mat("U_h"),
        b_h=ag.param(np.zeros(h), name=f"{prefix}.b_h"),
    )


def init_params(h: int, vocab_size: int, n_answers: int,
                rng: np.random.Generator, identity_eo: bool = False,
                embed_init_stddev: float = 0.1) -> ModelParams:
    e_i = ag.param(rng.normal(0.0, embed_init_stddev, size=(vocab_size, h)),
                   name="E_i")
    if identity_eo:
        e_o = ag.param(np.eye(n_answers), name="E_o")
    else:
        e_o = ag.param(rng.normal(0.0, embed_init_stddev, size=(n_answers, h)),
                       name="E_o")
    return ModelParams(
        h=h, vocab_size=vocab_size, n_answers=n_answers,
        identity_eo=identity_eo,
        E_i=e_i, E_o=e_o,
        gru_f=_init_gru(h, rng, "gru_f"),
        gru_b=_init_gru(h, rng, "gru_b"),
        W_q=ag.param(init_wq(h, rng), name="W_q"),
        U_q_c=ag.param(glorot(rng, (h, 3 * h)), name="U_q_c"),
        U_q_g=ag.param(glorot(rng, (h, 2 * h)), name="U_q_g"),
        b_q_g=ag.param(np.zeros(h), name="b_q_g"),
        U_a_q=ag.param(glorot(rng, (h, h)), name="U_a_q"),
        g_a_q=ag.param(np.asarray(0.0), name="g_a_q"),
        u_a_g=ag.param(glorot(rng, (2 * h + 1,)), name="u_a_g"),
        b_a=ag.param(np.asarray(0.0), name="b_a"),
    )
