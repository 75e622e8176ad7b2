"""Extension of the parameterization to the ambient space and saw-tooth domains."""
