"""Hybrid Markov logic networks for verifying learned embeddings."""
from .logic import ConfigError, EvaluationError, GroundAtom, Property, Spec, World
from .dsl import ParseError, parse_spec, render_spec
from .data import EmbeddingStore, EvidenceDB, load_embeddings, load_evidence
from .model import GroundModel, build_model, log_score

__version__ = "0.1.0"
