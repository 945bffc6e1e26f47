"""chapterbench: generate chapter-grounded MCQ benchmarks with a
designer/verifier agent pipeline, then evaluate and profile models on them."""

__version__ = "0.1.0"
