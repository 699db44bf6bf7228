"""Mean-value (segmenting Mann) iterations for nonlinear elliptic Cauchy problems."""
