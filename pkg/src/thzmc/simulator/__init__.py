"""Monte Carlo oracles: geometric snapshots and an event-driven mobility simulator."""
