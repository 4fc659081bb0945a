"""Experimental sequences as executable programs."""
from .cats import (generate_kerr_cat, generate_odd_even_cat, kerr_cat_reference, kerr_cat_sequence,
                   kerr_period_ns, lobe_angles, odd_even_sequence)
from .sequence import (Displace, FluxWindow, MeasureParity, MeasureQubit, PulseSequence, QubitRotation,
                       SequenceResult, Wait, run_sequence, sample_shots)
from .kerr_measure import (SingleToneResult, TwoToneResult, amplitude_for_nbar, nbar_for_amplitude, pull_factor,
                           single_tone_kerr, two_tone_kerr)
from .photon import (PhotonCalibration, PoissonFit, SpectroscopyResult, calibrate_photon_number,
                     calibrate_photon_number_wigner, fit_poisson, fit_spectrum_peaks, pump_gain, pumped_state,
                     qubit_spectroscopy)
from .preservation import (PRESERVATION_TARGETS, DecoherenceFit, calibrate_decoherence, fidelity_decay,
                           preserve_state)
