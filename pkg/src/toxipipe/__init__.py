"""Offline toolkit for social-media toxicovigilance.

Pipeline stages: lexical-variant expansion, corpus ingestion and matching,
human annotation with agreement metrics, supervised 4-class filtering with
fusion, longitudinal cohort management with bot filtering, and region-level
signal correlation against reference health metrics.
"""

__version__ = "0.1.0"
