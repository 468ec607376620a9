"""Knowledge-graph-masked autoencoder recommender with content-based explanations.

The package builds one tiny autoencoder per user whose hidden layer is the
set of knowledge-graph entities describing the catalog items.  Connections
exist only where the graph has an edge, so after training every hidden
weight is attached to a nameable entity.  On top of that sit labeled user
profiles, top-N recommendation, four explanation styles, the evaluation
metrics of an explanation study, and a 7-step study service with a
simulated-user harness.
"""

__version__ = "0.1.0"

from .errors import KgrecError

__all__ = ["KgrecError", "__version__"]
