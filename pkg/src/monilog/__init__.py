"""Streaming log structuring, anomaly detection and feedback-trained triage.

The package is organized around the stages of the pipeline:

- :mod:`monilog.ingest` reads raw log streams, replays them and injects
  controlled instability noise.
- :mod:`monilog.synthetic` generates workflow-driven corpora with ground
  truth for desk-scale evaluation.
- :mod:`monilog.preprocess` splits structured payloads off messages and
  tokenizes the free text.
- :mod:`monilog.parsing` mines message templates online with a fixed-depth
  search tree.
- :mod:`monilog.evaluation` scores parsing and detection quality and
  auto-calibrates parser parameters.
- :mod:`monilog.detect` finds sequential and quantitative anomalies over the
  structured stream and assembles anomaly reports.
- :mod:`monilog.classify` assigns reports to administrator-defined pools and
  learns from triage actions.
- :mod:`monilog.pipeline` wires the stages together; :mod:`monilog.service`
  exposes them over HTTP and :mod:`monilog.cli` as batch subcommands.
"""

__version__ = "0.1.0"
