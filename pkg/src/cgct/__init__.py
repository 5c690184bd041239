"""Aid-response curve estimation and budget-constrained allocation.

The package trains a pipeline that embeds country characteristics with a
balancing autoencoder, densifies the treatment axis with synthetic-twin
counterfactual outcomes, and fits a propensity-adjusted polynomial response
model. On top of the fitted curves it solves a budget-constrained allocation
problem. See README.md for the CLI and HTTP service entry points.
"""

__version__ = "0.1.0"
