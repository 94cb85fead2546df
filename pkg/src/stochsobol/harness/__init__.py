from .experiment import *  # noqa: F401,F403
from .experiment import __all__
