"""Scenario presets mirroring the published parameter studies.

Each preset is a config-text fragment on top of the baseline; resolve one
with `preset_config(name)` or materialize it via `raftsim preset <name>`.
The sweeps share the basic scenario (phi_hat = -0.5, reaction law) and vary
one parameter each; `energy_decreasing` switches the exchange law and
`bumpy` replaces the geometry.
"""

from .config import parse_config_text

_BASIC_STEPPER = """
[stepper]
adapt_const = 2e-2
tau_max = 5e-3
stationary_tol = 5e-3
stationary_steps = 50
t_end = 40
"""

PRESETS = {
    "basic": _BASIC_STEPPER + """
[run]
scenario = basic
""",
    "symmetric": _BASIC_STEPPER + """
[initial]
phi_hat = 0.0
[run]
scenario = symmetric
""",
}

for _value in ("0.0", "-0.1", "-0.25", "-0.5", "-0.75"):
    PRESETS[f"phihat_{_value}"] = _BASIC_STEPPER + f"""
[initial]
phi_hat = {_value}
[run]
scenario = phihat_{_value}
"""

for _value in ("0.3", "0.1", "0.02", "0.002"):
    PRESETS[f"delta_{_value}"] = _BASIC_STEPPER + f"""
[model]
delta = {_value}
[run]
scenario = delta_{_value}
"""

for _value in ("5", "100", "500", "2000"):
    PRESETS[f"c1_{_value}"] = _BASIC_STEPPER + f"""
[model]
c1 = {_value}
[run]
scenario = c1_{_value}
"""
    PRESETS[f"c2_{_value}"] = _BASIC_STEPPER + f"""
[model]
c2 = {_value}
[run]
scenario = c2_{_value}
"""

PRESETS["energy_decreasing"] = """
[model]
exchange = energy_decreasing
c = 500
[stepper]
variant = energy_decreasing
adapt_const = 5e-3
tau_max = 2e-3
stationary_tol = 5e-3
stationary_steps = 50
t_end = 10
[run]
scenario = energy_decreasing
"""

PRESETS["bumpy"] = _BASIC_STEPPER + """
[geometry]
generator = bumpy
level = 4
bump_amplitude = 0.2
wavenumber = 4
[run]
scenario = bumpy
"""


def preset_names():
    return sorted(PRESETS)


def preset_text(name):
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return PRESETS[name].lstrip()


def preset_config(name):
    return parse_config_text(preset_text(name))
