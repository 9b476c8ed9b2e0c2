"""Session-based recommendation on heterogeneous interaction graphs.

The package is organised bottom-up:

``autodiff``
    dense float64 tensors with taped reverse-mode differentiation
``data``
    interaction / attribute records, CSV ingest and export, rating mapping
``graph``
    global multi-relational graph, per-user layered local graphs, sessions
``model``
    embedding initialisers, the two message-passing aggregators, session
    fusion and attention, candidate sampling embeddings, scoring
``train``
    parameter initialisation, the ranking loss, Adam, the training loop
``evaluate``
    holdout protocol, ranking metrics, baselines, report writing
``synth``
    seeded synthetic interaction logs used by the demos and tests
``cli``
    ``hgsrec`` command line entry point
"""

__version__ = "0.1.0"
