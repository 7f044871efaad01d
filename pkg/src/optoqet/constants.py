"""Physical constants (CODATA 2018, exact in the 2019 SI)."""

HBAR = 1.054571817e-34  # J s
K_B = 1.380649e-23  # J / K

CONSTANTS = {"hbar": HBAR, "k_B": K_B, "source": "CODATA 2018"}
