"""Time-optimal rotation of a continuously monitored qubit: HJB solvers,
trajectory simulation and state-preparation bounds."""

__version__ = "0.1.0"
