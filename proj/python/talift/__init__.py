"""Translate, verify, repair and optimize tensor-accelerator programs."""

import json as _json
import os as _os
from pathlib import Path as _Path

# a wheel carries its own assets; source builds use the compiled-in path
_assets = _Path(__file__).with_name("assets")
if _assets.is_dir():
    _os.environ.setdefault("TALIFT_ASSETS", str(_assets))

from ._talift import (  # noqa: E402
    IsaError,
    ScheduleError,
    SimError,
    check_equivalence,
    golden,
    kernels,
    locality_cost,
    optimize,
    pass_at_k,
    program_cost,
    render_loop_kernel,
    repair_marked,
    run_cli,
    simulate,
    translation_prompt,
    verify,
)
from ._talift import apply_command as _apply_command  # noqa: E402


def apply_command(kernel: str, command) -> str:
    """Applies one schedule command, given as a dict or a JSON string."""
    if not isinstance(command, str):
        command = _json.dumps(command)
    return _apply_command(kernel, command)


__all__ = [
    "IsaError",
    "ScheduleError",
    "SimError",
    "apply_command",
    "check_equivalence",
    "golden",
    "kernels",
    "locality_cost",
    "optimize",
    "pass_at_k",
    "program_cost",
    "render_loop_kernel",
    "repair_marked",
    "run_cli",
    "simulate",
    "translation_prompt",
    "verify",
]
