"""Zero-one laws for binary random fields on lattice tori."""
