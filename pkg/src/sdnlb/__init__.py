"""Throughput-optimal in-network load balancing: allocation kernels and slotted simulators."""

__version__ = "0.1.0"
