"""Novel category discovery by matching prediction statistics to a known class prior."""

__version__ = "0.1.0"
