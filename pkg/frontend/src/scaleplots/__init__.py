from .figures import (
    PlotInputError,
    plot_convergence,
    plot_gain_growth,
    read_bound,
    read_gain_growth,
    read_trace,
)

__version__ = "0.1.0"
