"""adloop: human-in-the-loop active anomaly detection.

Tree and projection ensembles tuned from analyst label feedback, with
compact rule descriptions, streaming drift handling, and per-detector
local relevance learning.
"""

__version__ = "0.1.0"
