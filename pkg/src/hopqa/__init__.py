"""Multi-hop cloze query answering over explicit query-answer support pairs,
trained end-to-end on a from-scratch reverse-mode autodiff engine."""

__version__ = "0.1.0"
