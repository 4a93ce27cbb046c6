# Model parameters and run configuration
