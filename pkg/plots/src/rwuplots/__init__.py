"""Figure regeneration for rwusim CSV logs."""

from rwuplots.figures import PlotSpec, plot
from rwuplots.logs import LogFormatError, read_log

__version__ = "0.1.0"

__all__ = ["PlotSpec", "plot", "LogFormatError", "read_log", "__version__"]
