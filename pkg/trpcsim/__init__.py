"""
Simulation and FCC-compliance toolkit for TRPC ultra-wideband transceivers.

The names below are re-exported from their submodules on first access, so
``import trpcsim`` stays cheap for the CLI:

    >>> from trpcsim import MODES, synth_frame, check_fcc
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "ClusterSpec": "trpc",
    "LoConfig": "trpc",
    "MODES": "trpc",
    "TxMode": "trpc",
    "get_mode": "trpc",
    "synth_cluster": "trpc",
    "synth_frame": "trpc",
    "transmit_frame": "trpc",
    "upconvert_iq": "trpc",
    "SampledWaveform": "waveform",
    "SpectrumEstimate": "waveform",
    "psd_estimate": "waveform",
    "read_waveform": "waveform",
    "write_waveform": "waveform",
    "FCC_UWB": "compliance",
    "check_fcc": "compliance",
    "max_fbw_peak_power": "compliance",
    "solve_amplitude": "compliance",
    "IDEAL": "impairments",
    "ImpairmentConfig": "impairments",
    "upconvert_impaired": "impairments",
    "ChannelModel": "link",
    "ChannelTap": "link",
    "run_ser": "link",
    "sweep_ser": "link",
    "Scenario": "scenario",
    "load_scenario": "scenario",
    "TrpcError": "errors",
    "ParameterError": "errors",
    "GuardViolationError": "errors",
}

__all__ = sorted(_EXPORTS)


def __getattr__(name: str):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    value = getattr(import_module(f"{__name__}.{module}"), name)
    globals()[name] = value
    return value


def __dir__():
    return sorted(list(globals()) + __all__)
