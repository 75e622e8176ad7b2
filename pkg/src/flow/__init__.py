"""The construction maps sigma_k and f_k, and checks on their output surfaces."""
