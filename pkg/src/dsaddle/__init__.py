"""Block preconditioning of double saddle-point systems."""
