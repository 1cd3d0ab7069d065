"""g-matrix and Rabi-frequency simulator for hole spin qubits in gated silicon devices."""

__version__ = "0.1.0"
