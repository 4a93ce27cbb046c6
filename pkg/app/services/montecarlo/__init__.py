# Monte Carlo services
