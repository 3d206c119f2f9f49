from chronotrack.evaluation.metrics import OpeResult, ope, stratify_by_length  # noqa: F401
