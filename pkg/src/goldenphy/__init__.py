"""Zadoff-Chu spread-spectrum PHY simulation: sequences, modem, channel, interference and BER analysis."""

__version__ = "0.1.0"

from .analysis import BerPoint, RicianModel, ber_approx, ber_integral, monte_carlo_ber, q_function, rejection_table
from .channel import ChannelConfig, SampleBuffer, ShapingConfig, add_awgn, matched_filter, pulse_shape
from .framing import DetectionResult, FrameConfig, frame_decode, frame_encode, preamble_detect
from .modem import LinkConfig, demodulate_stream, demodulate_symbol, modulate
from .multiuser import InterfererSpec, MultiuserScenario, superpose, xcorr_matrix
from .zc import ChipSequence, CorrelationProfile, ZcParams, aperiodic_xcorr, cyclic_xcorr, zc_generate

__all__ = [
    "BerPoint", "ChannelConfig", "ChipSequence", "CorrelationProfile", "DetectionResult", "FrameConfig",
    "InterfererSpec", "LinkConfig", "MultiuserScenario", "RicianModel", "SampleBuffer", "ShapingConfig",
    "ZcParams", "add_awgn", "aperiodic_xcorr", "ber_approx", "ber_integral", "cyclic_xcorr", "demodulate_stream",
    "demodulate_symbol", "frame_decode", "frame_encode", "matched_filter", "modulate", "monte_carlo_ber",
    "preamble_detect", "pulse_shape", "q_function", "rejection_table", "superpose", "xcorr_matrix", "zc_generate",
]
