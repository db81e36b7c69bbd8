from .network import *  # noqa
from .powerflow import *  # noqa
from .linearization import *  # noqa
from .program import *  # noqa
from .builder import *  # noqa
from .solver import *  # noqa
