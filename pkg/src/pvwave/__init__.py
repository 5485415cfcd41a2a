"""Price-volume probability wave toolkit: fitting, day classification and
return/volume correlation analysis for tick data."""

__version__ = "0.1.0"
