from chronotrack.training.checkpoint import Checkpoint, load_checkpoint, save_checkpoint  # noqa: F401
from chronotrack.training.loop import TrainState, train, train_step  # noqa: F401
from chronotrack.training.optim import Adam, AdamState, learning_rate  # noqa: F401
from chronotrack.training.window import prepare_window, sample_window, window_forward  # noqa: F401
