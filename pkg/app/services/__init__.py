# Pricing engines
