"""Numeral211 Hold'em toolkit: hand abstraction, CFR solving, exploitability."""

__version__ = "0.1.0"
