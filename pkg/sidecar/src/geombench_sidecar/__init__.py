"""Embedding provider service: pretrained checkpoints behind the
GET /v1/models + POST /v1/embed protocol."""

__version__ = "0.1.0"
