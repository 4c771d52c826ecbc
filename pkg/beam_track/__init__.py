"""Cooperative optical beam tracking - simulator, jump filter, optimal control and bound."""

__version__ = '0.3.0'
