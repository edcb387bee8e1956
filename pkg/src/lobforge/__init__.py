"""Event-driven limit order book simulator with a data-fitted world agent."""

__version__ = "0.1.0"

from lobforge.orderbook import Book, Side

__all__ = ["Book", "Side", "__version__"]
