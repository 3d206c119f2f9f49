class ChronoTrackError(Exception):
    """
    Base class for every error the package raises on purpose.
    """


class ShapeError(ChronoTrackError):
    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = tuple(tuple(shape) for shape in shapes)
        super().__init__('%s: incompatible shapes %s' % (op, ' vs '.join(str(s) for s in self.shapes)))


class NonFiniteError(ChronoTrackError):
    def __init__(self, op, node_id):
        self.op = op
        self.node_id = node_id
        super().__init__('%s produced a non-finite value at node %s' % (op, node_id))


class NotScalarError(ChronoTrackError):
    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__('backward needs a scalar loss, got shape %s' % (self.shape,))


class GraphConsumedError(ChronoTrackError):
    pass


class EmptyKeysError(ChronoTrackError):
    pass


class GeometryError(ChronoTrackError):
    pass


class InitializationError(ChronoTrackError):
    pass


class EncoderError(ChronoTrackError):
    pass


class GeneratorSpecError(ChronoTrackError):
    pass


class SequenceFormatError(ChronoTrackError):
    def __init__(self, line, message):
        self.line = line
        self.message = message
        super().__init__('line %s: %s' % (line, message))


class ConfigError(ChronoTrackError):
    def __init__(self, key, message):
        self.key = key
        super().__init__('%s: %s' % (key, message))


class CheckpointError(ChronoTrackError):
    pass


class CheckpointMismatchError(CheckpointError):
    def __init__(self, mismatches):
        self.mismatches = list(mismatches)
        super().__init__('checkpoint does not match the model: %s' % '; '.join(self.mismatches))


class NoEligibleSequenceError(ChronoTrackError):
    pass


class EvaluationError(ChronoTrackError):
    def __init__(self, sequence, message):
        self.sequence = sequence
        super().__init__('%s: %s' % (sequence, message))
