"""XML data warehousing: cube building, storage, indexing, views and mining."""

__version__ = "0.1.0"
