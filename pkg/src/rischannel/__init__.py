"""Method-of-moments channel matrices for RIS-assisted MIMO links."""

__version__ = "0.1.0"
