"""Second-order variational problems: solver, necessary-condition profiles and regularity checks."""
