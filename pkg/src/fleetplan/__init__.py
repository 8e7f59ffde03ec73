"""fleetplan: repair scheduling for fleets of deteriorating agents under a
global budget and a simultaneous-repair capacity limit."""

__version__ = "0.1.0"
