# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""Meso-macro traffic simulation with demonstration-guided recurrent Q-learning"""

import logging

from mesomacro.errors import ConfigurationError, InvariantError, MesomacroError, PlanningError, ValidationError

LOGGER = logging.getLogger(__name__)

__all__ = ["ConfigurationError", "InvariantError", "MesomacroError", "PlanningError", "ValidationError"]
