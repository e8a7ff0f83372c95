"""Python bindings for the agentguard safety evaluation pipeline.

The extension module lives inside this package in installed wheels and as a
top-level module when running against a plain CMake build tree.
"""

try:
    from ._agentguard import *  # noqa: F401,F403
    from ._agentguard import __doc__  # noqa: F401
except ImportError:
    from _agentguard import *  # noqa: F401,F403
    from _agentguard import __doc__  # noqa: F401
