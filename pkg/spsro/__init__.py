from .engine import preset_variant, run_spsro, solver_switch_schedule
from .version import __VERSION__
