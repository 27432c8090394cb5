"""Seeds, accumulators, configuration and the command line driver."""
