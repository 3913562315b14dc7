"""gapmor: H2-gap model order reduction for unstable LTI systems."""

__version__ = "0.1.0"
