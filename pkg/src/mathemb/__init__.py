"""mathemb: embeddings for mathematical information retrieval.

Tokenizes LaTeX formulae into classified symbol streams, trains symbol-level
(CBOW) and formula-level (PV-DM) embeddings from scratch, ranks pages for
mixed keyword+formula queries, and evaluates runs with standard ranked
retrieval metrics.
"""

__version__ = "0.1.0"
