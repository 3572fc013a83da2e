"""wardcart: deterministic simulator of vision-guided ward delivery carts."""

__version__ = "0.1.0"

from . import arena, comms, controller, mission, simcore, vehicle, vision  # noqa: F401
