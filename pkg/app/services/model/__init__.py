# Model core services
