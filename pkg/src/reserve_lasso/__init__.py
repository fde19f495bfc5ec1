"""Loss-reserve forecast error estimation via a penalized regression path,
Bayesian model averaging, and a semi-parametric bootstrap."""

__version__ = "0.1.0"

from .triangle import (  # noqa: F401
    Cell,
    ForecastRegion,
    Triangle,
    future_cells,
    past_cells,
    payment_period,
    reserve,
)
