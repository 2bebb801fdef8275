"""Small-signal stability and SCR toolbox for an aggregated offshore wind
power plant connected together with a synchronous condenser."""

__version__ = "0.1.0"
