from chronotrack.autodiff.gradcheck import grad_check  # noqa: F401
from chronotrack.autodiff.graph import Graph, Tensor, constant  # noqa: F401
