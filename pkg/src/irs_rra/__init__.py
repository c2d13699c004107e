"""Reflection resource allocation for modular reflecting surfaces.

Pipeline: draw channels (`channel`), aggregate them (`metrics`), pick the
active modules by group-sparse bisection (`sparsity` on top of `conic`),
then refine powers and phases with alternating optimization (`altopt`).
`harness` sweeps the whole thing over Monte-Carlo realizations and emits the
figure datasets.
"""

from . import altopt, channel, checks, cli, conic, harness, metrics, model, sparsity  # noqa: F401

__version__ = "0.1.0"
