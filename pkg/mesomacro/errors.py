# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Exceptions raised by the mesomacro package"""


class MesomacroError(Exception):
    """Base class of all errors raised on purpose by mesomacro"""


class ConfigurationError(MesomacroError, ValueError):
    """A network, demand or agent configuration is malformed

    The message always names the offending field path, e.g. ``roads[2].v_max``.
    """

    def __init__(self, field, reason):
        self.field = field
        self.reason = reason
        super(ConfigurationError, self).__init__("{}: {}".format(field, reason))


class ValidationError(ConfigurationError):
    """The configuration is well-formed but structurally inconsistent"""

    def __init__(self, field, reason, items=()):
        self.items = tuple(items)
        if self.items:
            reason = "{} ({})".format(reason, ", ".join(str(item) for item in self.items))
        super(ValidationError, self).__init__(field, reason)


class PlanningError(MesomacroError, RuntimeError):
    """No path exists for an origin-destination pair"""

    def __init__(self, origin, destination):
        self.origin = origin
        self.destination = destination
        super(PlanningError, self).__init__("No path from '{}' to '{}'".format(origin, destination))


class InvariantError(MesomacroError, RuntimeError):
    """An internal conservation or flow-constraint audit failed"""
