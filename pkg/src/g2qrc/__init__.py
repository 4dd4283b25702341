"""Hybrid quantum-classical pipeline estimating g2(0) from reservoir readout.

Subpackages: hilbert (truncated-mode operator algebra), dynamics (Lindblad
integration and steady states), sources (prepared quantum-optical states),
reservoir (cascaded two-level network features), forest (native regression
forests), experiments (datasets, evaluations, reports), cli (entry point).
"""

__version__ = "0.1.0"
