"""Learning optimal LP bases of the uncertain DC-OPF and building ensemble policies from them."""

__version__ = "0.1.0"
