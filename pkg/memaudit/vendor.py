"""Optional dependencies.

pandas is only needed by the ``to_dataframe()`` views (:class:`memaudit.files.ScoreFile`,
:class:`memaudit.experiments.GuaranteeCurve` and :class:`memaudit.experiments.ExperimentTable`), which raise
``ImportError("Pandas is missing.")`` when `_has_pandas` is `False`.
"""

try:
    import pandas  # noqa

    _has_pandas = True
except ImportError:
    _has_pandas = False
