# Spectrogram features of a heartbeat segment
#
# The dual-branch classifier looks at each 187-sample beat twice: once as raw
# samples and once as a short-time magnitude spectrogram. This script builds
# one synthetic beat and walks through the spectrogram computation.

import numpy as np

from uctecg.data import PTB
from uctecg.dsp import StftConfig, frames, spectrogram, standardize
from uctecg.synthetic import make_beats

beat = make_beats(1, PTB, seed=0)[0]
print("label:", PTB.class_names[beat.label], "samples:", beat.samples.shape)

# Default framing: 32-sample Hann window, hop 4, 32-point FFT, log1p magnitudes.
cfg = StftConfig()
print("frames x bins:", cfg.shape())

# The framing is just a strided view of the signal.
f = frames(beat.samples, cfg)
print("first frame starts at sample 0, second at", cfg.hop, "->", np.allclose(f[1], beat.samples[4:36]))

spec = spectrogram(beat, cfg)
print("spectrogram", spec.values.shape, "max bin per frame (first 10):", spec.values.argmax(axis=1)[:10])

# The network sees the spectrogram standardized per beat.
z = standardize(spec.values)
print("standardized mean %.2e, std %.4f" % (z.mean(), z.std()))

# A coarser grid, e.g. for a lighter transformer branch
coarse = StftConfig(window_len=64, hop=8, fft_len=64)
print("coarse grid:", spectrogram(beat, coarse).values.shape)
