"""Analysis of probabilistic one-counter automata: termination, expected times and ω-regular properties."""
