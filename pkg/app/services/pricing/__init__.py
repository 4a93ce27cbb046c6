# Pricing services
