"""Figure generation for sweep result CSVs produced by crmac-sim."""

from .plot_sweep import FIGURES, FigureSpec, SchemaError, load_series, plot_sweep

__all__ = ["FIGURES", "FigureSpec", "SchemaError", "load_series", "plot_sweep"]
