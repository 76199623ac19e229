"""Novelty detection for scientific ideas.

Builds closure-complete idea corpora, distills a lightweight retrieval
head from synthesized idea pairs, and classifies candidate ideas as
novel or not via retrieval-augmented scoring plus a decision tree.
"""

__version__ = "0.1.0"
