from ._axunet import *  # noqa: F401,F403
