# PDE services: localization, finite elements, characteristics solver
