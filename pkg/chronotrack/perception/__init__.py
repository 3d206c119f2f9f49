from chronotrack.perception.decoder import Prediction, decode  # noqa: F401
from chronotrack.perception.encoder import FeatureMap, encode  # noqa: F401
