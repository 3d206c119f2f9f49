from chronotrack.data.io import (  # noqa: F401
    read_boxes, read_dataset, read_sequence, write_boxes, write_dataset, write_sequence,
)
from chronotrack.data.sequence import Frame, Sequence  # noqa: F401
from chronotrack.data.synth import GeneratorSpec, generate_sequence  # noqa: F401
