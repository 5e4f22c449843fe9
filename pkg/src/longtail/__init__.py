"""Topic models of grant abstracts, topic investment, and funding/output analysis."""

__version__ = "0.1.0"
