"""Desk-scale multispectral super-resolution testbed.

Everything runs on CPU from explicit seeds: pretrained networks are replaced
by frozen random-weight stand-ins so that the surrounding machinery (adapter
branches, conditioning modules, losses, metrics, evaluation) is exercised
end to end and fully testable.
"""

__version__ = "0.1.0"
